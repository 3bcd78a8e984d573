//! Accelerated gradient method in two-sequence form, with the position–velocity
//! recursion carried alongside for energy evaluation.
//!
//! Iteration (`h = 1/√L`):
//!
//! ```text
//! y_{k+1} = x_k − h²∇f(x_k)
//! x_{k+1} = y_{k+1} + (y_{k+1} − y_k)/(1+αh) + (γ/(1+αh) − 1)(y_{k+1} − x_k)
//! ```
//!
//! The state at index `k` holds `v_k = (x_{k+1} − x_k)/h`, obtained from
//! `v_{k+1} = [v_k − h(∇f(x_{k+1}) − ∇f(x_k)) − γh∇f(x_{k+1})]/(1+αh)`, so `E_k`
//! is available without computing `x_{k+1}` first.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{fit_linear_rate, RateFit, DEFAULT_FIT_WINDOW};
use crate::oracle::{Point, SmoothObjective};
use crate::params::{check_constraints, AgmParams};
use crate::trace::{
    certify_contraction, iterations_to, CertificateResult, IterationRecord, Rows, Solver, Summary,
    Tolerances, Trace,
};

/// Relative deviation allowed between `x_{k+1}` and `x_k + h v_k`.
pub const FORM_TOL: f64 = 1e-12;

/// Divergence guard: abort once the gap exceeds this multiple of the initial gap.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct AgmState {
    pub k: usize,
    pub x: Point,
    pub y: Point,
    pub v: Point,
    pub grad_x: Point,
}

/// Components of `E_k`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyTerms {
    pub phi: Point,
    pub sigma: Point,
    pub psi: f64,
    pub e: f64,
}

fn check_finite(p: &Point, iteration: usize) -> Result<()> {
    if p.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite { iteration })
    }
}

/// Initial state: `v₀ = −c·h∇f(x₀)` and `y₀` recovered so that the first step reproduces
/// `x₁ = x₀ + hv₀`, `y₁ = x₀ − h²∇f(x₀)`.
pub fn agm_init(obj: &SmoothObjective, params: &AgmParams, x0: &Point) -> Result<AgmState> {
    if x0.len() != obj.dim() {
        return Err(Error::DimensionMismatch { expected: obj.dim(), got: x0.len() });
    }
    let h = params.h();
    let ah = params.alpha() * h;
    let g0 = obj.gradient(x0);
    check_finite(&g0, 0)?;
    let v0 = &g0 * (-params.v0_coeff() * h);
    let x1 = x0 + &v0 * h;
    let y1 = x0 - &g0 * (h * h);
    let y0 = &y1 + (&y1 - &x1) * (1.0 + ah) + (&y1 - x0) * (params.gamma() - (1.0 + ah));
    Ok(AgmState { k: 0, x: x0.clone(), y: y0, v: v0, grad_x: g0 })
}

/// Builds a state from explicit iterates; `v` is taken as `(x_next − x)/h`.
pub fn agm_state_from_iterates(
    obj: &SmoothObjective,
    params: &AgmParams,
    k: usize,
    x: &Point,
    y: &Point,
    x_next: &Point,
) -> AgmState {
    AgmState {
        k,
        x: x.clone(),
        y: y.clone(),
        v: (x_next - x) / params.h(),
        grad_x: obj.gradient(x),
    }
}

/// One step. Returns the new state and the two-form deviation
/// `‖x_{k+1} − (x_k + h v_k)‖ / max(1, ‖x_k‖)`.
pub fn agm_step_checked(state: &AgmState, obj: &SmoothObjective, params: &AgmParams) -> Result<(AgmState, f64)> {
    let h = params.h();
    let ah = params.alpha() * h;
    let gamma = params.gamma();
    let k1 = state.k + 1;

    let y_next = &state.x - &state.grad_x * (h * h);
    let x_next = &y_next + (&y_next - &state.y) / (1.0 + ah) + (&y_next - &state.x) * (gamma / (1.0 + ah) - 1.0);
    check_finite(&x_next, k1)?;
    let g_next = obj.gradient(&x_next);
    check_finite(&g_next, k1)?;
    let v_next = (&state.v - (&g_next - &state.grad_x) * h - &g_next * (gamma * h)) / (1.0 + ah);
    check_finite(&v_next, k1)?;

    let deviation = (&x_next - (&state.x + &state.v * h)).norm() / state.x.norm().max(1.0);
    Ok((AgmState { k: k1, x: x_next, y: y_next, v: v_next, grad_x: g_next }, deviation))
}

/// One step, failing if the two forms disagree beyond [`FORM_TOL`].
pub fn agm_step(state: &AgmState, obj: &SmoothObjective, params: &AgmParams) -> Result<AgmState> {
    let (next, deviation) = agm_step_checked(state, obj, params)?;
    if deviation > FORM_TOL {
        return Err(Error::FormMismatch { iteration: next.k, deviation });
    }
    Ok(next)
}

/// `φ_k`, `σ_k`, `ψ_k` and `E_k` at the given state.
pub fn agm_energy(state: &AgmState, obj: &SmoothObjective, params: &AgmParams, xstar: &Point, fstar: f64) -> EnergyTerms {
    let h = params.h();
    let xi = params.xi();
    let g = &state.grad_x;
    let dx = &state.x - xstar;
    let gap = match (obj.min_value(), obj.gap(&state.x)) {
        (Some(known), Some(gap)) if known == fstar => gap,
        _ => obj.value(&state.x) - fstar,
    };
    let phi = &state.v * (1.0 + xi * h) + g * h + &dx * xi;
    let sigma = &dx - g * (h * h);
    let psi = gap - 0.5 * h * h * g.norm_squared();
    let e = 0.5 * phi.norm_squared() - 0.5 * params.eta() * sigma.norm_squared() + params.theta() * psi;
    EnergyTerms { phi, sigma, psi, e }
}

/// Checks `(1+Ah)E_{k+1} ≤ E_k + tol_abs + tol_rel·|E_k|`.
pub fn agm_certify_step(k: usize, ek: f64, ek1: f64, params: &AgmParams, tol_rel: f64, tol_abs: f64) -> CertificateResult {
    certify_contraction(k, ek, ek1, 1.0 + params.a() * params.h(), tol_rel, tol_abs)
}

/// One step of the classical scheme `x_k = y_k + τ(y_k − y_{k−1})`, `y_{k+1} = x_k − h²∇f(x_k)`.
pub fn nesterov_reference_step(y_prev: &Point, y_curr: &Point, tau: f64, h: f64, obj: &SmoothObjective) -> (Point, Point) {
    let x = y_curr + (y_curr - y_prev) * tau;
    let y_next = &x - obj.gradient(&x) * (h * h);
    (x, y_next)
}

/// Runs `iterations` steps from `x0`.
///
/// With `certify`, the bundle must satisfy its theorem's hypotheses; energies,
/// per-step certificates and the gap bound are then checked whenever `x*` is known.
pub fn agm_run(
    obj: &SmoothObjective,
    params: &AgmParams,
    x0: &Point,
    iterations: usize,
    certify: bool,
) -> Result<Trace> {
    agm_run_with(obj, params, x0, iterations, certify, Tolerances::default())
}

pub fn agm_run_with(
    obj: &SmoothObjective,
    params: &AgmParams,
    x0: &Point,
    iterations: usize,
    certify: bool,
    tol: Tolerances,
) -> Result<Trace> {
    if iterations == 0 {
        return Err(Error::InvalidInput("iteration count must be at least 1".into()));
    }
    if certify {
        let v = check_constraints(params, params.regime());
        if !v.is_empty() {
            return Err(Error::Constraints(v));
        }
    }
    let start = Instant::now();
    let mut state = agm_init(obj, params, x0)?;
    let exact = match (obj.minimizer(), obj.min_value()) {
        (Some(x), Some(f)) => Some((x.clone(), f)),
        _ => None,
    };
    let certified = certify && exact.is_some();
    let h2 = params.h() * params.h();

    let gap0 = obj.gap(x0);
    let f0 = obj.value(x0);
    let mut rows = Vec::with_capacity(iterations + 1);
    let mut certs = Vec::new();
    let mut bound_checked = 0;
    let mut bound_violations = 0;
    let mut max_dev: f64 = 0.0;
    let mut e0 = None;
    let mut e_prev: Option<f64> = None;
    let mut error = None;
    // raw values used when f* is unknown
    let mut fx_raw = Vec::new();
    let mut fy_raw = Vec::new();

    loop {
        let k = state.k;
        let y_next = &state.x - &state.grad_x * h2;
        let (gx, gy) = match gap0 {
            Some(_) => (obj.gap(&state.x), obj.gap(&y_next)),
            None => {
                fx_raw.push(obj.value(&state.x));
                fy_raw.push(obj.value(&y_next));
                (None, None)
            }
        };
        let energy = if certified {
            let (xs, fs) = exact.as_ref().expect("certified implies x*");
            Some(agm_energy(&state, obj, params, xs, *fs).e)
        } else {
            None
        };
        let mut slack = None;
        if let (Some(e), Some(prev)) = (energy, e_prev) {
            let abs = tol.abs * (1.0 + e0.unwrap_or(prev).abs());
            let c = agm_certify_step(k - 1, prev, e, params, tol.rel, abs);
            slack = Some(c.slack);
            certs.push(c);
        }
        if e0.is_none() {
            e0 = energy;
        }
        e_prev = energy;
        let bound = match gap0 {
            Some(g0) if certify => Some(params.gap_bound_factor(k) * g0),
            _ => None,
        };
        if let (Some(b), Some(g), Some(g0)) = (bound, gy, gap0) {
            bound_checked += 1;
            if !tol.bound_holds(g, b, g0) {
                bound_violations += 1;
            }
        }
        rows.push(IterationRecord {
            k,
            f_gap_x: gx,
            f_gap_y: gy,
            grad_norm: state.grad_x.norm(),
            energy,
            certificate_slack: slack,
            theorem_bound: bound,
        });
        if let Some(g) = gx {
            let g0 = gap0.unwrap_or(0.0);
            if g > DIVERGENCE_FACTOR * g0 && g > 1e-12 * (1.0 + f0.abs()) {
                error = Some(Error::Diverged { iteration: k, gap: g, initial: g0 });
                break;
            }
        }
        if k == iterations {
            break;
        }
        match agm_step_checked(&state, obj, params) {
            Ok((next, dev)) => {
                max_dev = max_dev.max(dev);
                if dev > FORM_TOL {
                    error = Some(Error::FormMismatch { iteration: next.k, deviation: dev });
                    break;
                }
                state = next;
            }
            Err(e) => {
                error = Some(e);
                break;
            }
        }
    }

    if gap0.is_none() {
        // no f*: report gaps against the best value seen
        let best = fx_raw.iter().chain(fy_raw.iter()).cloned().fold(f64::INFINITY, f64::min);
        for (r, (fx, fy)) in rows.iter_mut().zip(fx_raw.iter().zip(fy_raw.iter())) {
            r.f_gap_x = Some(fx - best);
            r.f_gap_y = Some(fy - best);
        }
    }

    let gaps_y: Vec<f64> = rows.iter().filter_map(|r| r.f_gap_y).collect();
    let g0_ref = rows.first().and_then(|r| r.f_gap_x).unwrap_or(0.0);
    let rate_fitted = match fit_linear_rate(&gaps_y, DEFAULT_FIT_WINDOW) {
        RateFit::Rate(r) => Some(r),
        RateFit::Indeterminate { .. } => None,
    };
    let summary = Summary {
        solver: Solver::Agm,
        regime: params.regime(),
        problem: obj.name().to_string(),
        params: serde_json::to_value(params).unwrap_or(serde_json::Value::Null),
        certified,
        steps: rows.last().map(|r| r.k).unwrap_or(0),
        initial_gap: gap0,
        final_gap: gaps_y.last().copied(),
        certificates_checked: certs.len(),
        certificates_failed: certs.iter().filter(|c| !c.passed).count(),
        bound_checked,
        bound_violations,
        corollary_checked: 0,
        corollary_violations: 0,
        rate_theory: params.rho(),
        rate_fitted,
        iterations_to_tol: iterations_to(&gaps_y, g0_ref, 1e-9),
        max_form_deviation: Some(max_dev),
        wall_time_s: start.elapsed().as_secs_f64(),
        error: error.as_ref().map(|e| e.to_string()),
    };
    Ok(Trace { rows: Rows::Iterations(rows), certificates: certs, summary, error })
}
