//! Continuous dynamics `ẍ + αẋ + β∇²f(x)ẋ + γ∇f(x) = 0`, integrated through the
//! gradient-only system in `(x, z)` with `z = ẋ + β∇f(x)`:
//!
//! ```text
//! ẋ = z − β∇f(x)
//! ż = −αz + (αβ − γ)∇f(x)
//! ```
//!
//! Starting from `ẋ(0) = −β∇f(x₀)` gives `z(0) = 0`.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{fit_linear_rate, DEFAULT_FIT_WINDOW};
use crate::oracle::{Point, SmoothObjective};
use crate::params::OdeParams;
use crate::trace::{iterations_to, CertificateResult, Rows, Solver, Summary, TimeRecord, Trace};

#[derive(Debug, Clone, PartialEq)]
pub struct OdeState {
    pub t: f64,
    pub x: Point,
    pub z: Point,
}

impl OdeState {
    /// State at `t = 0` with `z = 0`.
    pub fn initial(x0: &Point) -> Self {
        Self { t: 0.0, x: x0.clone(), z: Point::zeros(x0.len()) }
    }

    /// `ẋ = z − β∇f(x)`.
    pub fn velocity(&self, obj: &SmoothObjective, params: &OdeParams) -> Point {
        &self.z - obj.gradient(&self.x) * params.beta()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeEnergy {
    pub eps: f64,
    pub f_gap: f64,
}

/// Budget for [`ode_certify`].
///
/// Step `j → j+1` passes when `m_{j+1} ≤ m_j + safety·err_{j+1}e^{rate·t_{j+1}} + step_rel·|m_j|`,
/// with `m = ε e^{rate·t}` and `err` the error budget stored in the trace (step-halving
/// estimate plus the rounding floor of both samples).
/// Every sample must also satisfy `ε(t) ≤ ε(0)e^{−rate·t}(1 + global_rel)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OdeTolerance {
    pub safety: f64,
    pub step_rel: f64,
    pub global_rel: f64,
}

impl Default for OdeTolerance {
    fn default() -> Self {
        Self { safety: 10.0, step_rel: 1e-12, global_rel: 1e-6 }
    }
}

pub fn hbfh_vector_field(state: &OdeState, obj: &SmoothObjective, params: &OdeParams) -> (Point, Point) {
    let g = obj.gradient(&state.x);
    let dx = &state.z - &g * params.beta();
    let dz = &state.z * (-params.alpha()) + &g * (params.alpha() * params.beta() - params.gamma());
    (dx, dz)
}

fn shifted(state: &OdeState, dt: f64, k: &(Point, Point)) -> OdeState {
    OdeState { t: state.t + dt, x: &state.x + &k.0 * dt, z: &state.z + &k.1 * dt }
}

pub fn rk4_step(state: &OdeState, dt: f64, obj: &SmoothObjective, params: &OdeParams) -> Result<OdeState> {
    rk4_step_from(state, &hbfh_vector_field(state, obj, params), dt, obj, params)
}

/// RK4 step given the field `k1` at `state`.
fn rk4_step_from(
    state: &OdeState,
    k1: &(Point, Point),
    dt: f64,
    obj: &SmoothObjective,
    params: &OdeParams,
) -> Result<OdeState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("step size must be positive and finite, got {dt}")));
    }
    let k2 = hbfh_vector_field(&shifted(state, 0.5 * dt, k1), obj, params);
    let k3 = hbfh_vector_field(&shifted(state, 0.5 * dt, &k2), obj, params);
    let k4 = hbfh_vector_field(&shifted(state, dt, &k3), obj, params);
    let w = dt / 6.0;
    let x = &state.x + (&k1.0 + &k2.0 * 2.0 + &k3.0 * 2.0 + &k4.0) * w;
    let z = &state.z + (&k1.1 + &k2.1 * 2.0 + &k3.1 * 2.0 + &k4.1) * w;
    if !x.iter().chain(z.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite { iteration: 0 });
    }
    Ok(OdeState { t: state.t + dt, x, z })
}

/// `ε = ½‖z + ξ(x−x*)‖² − (η/2)‖x−x*‖² + θ(f(x)−f*)`.
pub fn ode_energy(state: &OdeState, obj: &SmoothObjective, params: &OdeParams, xstar: &Point, fstar: f64) -> OdeEnergy {
    let dx = &state.x - xstar;
    let f_gap = obj.gap(&state.x).unwrap_or_else(|| obj.value(&state.x) - fstar);
    let eps = 0.5 * (&state.z + &dx * params.xi()).norm_squared() - 0.5 * params.eta() * dx.norm_squared()
        + params.theta() * f_gap;
    OdeEnergy { eps, f_gap }
}

/// First-order size of the rounding error in `ε` at `state`: the change in `ε` caused by
/// perturbing `x` and `z` by one unit in the last place.
pub fn energy_rounding(state: &OdeState, obj: &SmoothObjective, params: &OdeParams, xstar: &Point, eps: f64) -> f64 {
    let dx = &state.x - xstar;
    let phi = (&state.z + &dx * params.xi()).norm();
    let sensitivity = phi * (1.0 + params.xi()) + params.eta() * dx.norm() + params.theta() * obj.gradient(&state.x).norm();
    let ulp = f64::EPSILON * (state.x.norm() + xstar.norm() + state.z.norm());
    ulp * sensitivity + f64::EPSILON * eps.abs()
}

/// Default step `0.1/√(L(1+αβ))`.
pub fn default_dt(obj: &SmoothObjective, params: &OdeParams) -> f64 {
    0.1 / (obj.lipschitz() * (1.0 + params.alpha() * params.beta())).sqrt()
}

/// Checks that `ε(t)e^{rate·t}` does not increase between samples (up to the
/// recorded integration error) and that `ε` stays below its global envelope.
pub fn ode_certify(trace: &Trace, rate: f64, tol: &OdeTolerance) -> Vec<CertificateResult> {
    certify_samples(trace.times(), rate, tol)
}

fn certify_samples(rows: &[TimeRecord], rate: f64, tol: &OdeTolerance) -> Vec<CertificateResult> {
    let Some(e0) = rows.first().and_then(|r| r.energy) else {
        return Vec::new();
    };
    let mut out = Vec::with_capacity(rows.len().saturating_sub(1));
    for (j, pair) in rows.windows(2).enumerate() {
        let (Some(ea), Some(eb)) = (pair[0].energy, pair[1].energy) else {
            continue;
        };
        let ma = ea * (rate * pair[0].t).exp();
        let mb = eb * (rate * pair[1].t).exp();
        let allowance = tol.safety * pair[1].local_error * (rate * pair[1].t).exp() + tol.step_rel * ma.abs();
        let slack = ma - mb;
        let global_ok = eb <= e0 * (-rate * pair[1].t).exp() * (1.0 + tol.global_rel) + tol.step_rel * e0.abs();
        out.push(CertificateResult { k: j, lhs: mb, rhs: ma, slack, passed: mb <= ma + allowance && global_ok });
    }
    out
}

pub fn ode_run(obj: &SmoothObjective, params: &OdeParams, x0: &Point, horizon: f64, dt: Option<f64>) -> Result<Trace> {
    ode_run_with(obj, params, x0, horizon, dt, OdeTolerance::default())
}

pub fn ode_run_with(
    obj: &SmoothObjective,
    params: &OdeParams,
    x0: &Point,
    horizon: f64,
    dt: Option<f64>,
    tol: OdeTolerance,
) -> Result<Trace> {
    if x0.len() != obj.dim() {
        return Err(Error::DimensionMismatch { expected: obj.dim(), got: x0.len() });
    }
    if !(horizon > 0.0 && horizon.is_finite()) {
        return Err(Error::InvalidInput(format!("horizon must be positive and finite, got {horizon}")));
    }
    let dt = dt.unwrap_or_else(|| default_dt(obj, params));
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidInput(format!("step size must be positive and finite, got {dt}")));
    }
    let start = Instant::now();
    let steps = (horizon / dt).round().max(1.0) as usize;
    let exact = match (obj.minimizer(), obj.min_value()) {
        (Some(x), Some(f)) => Some((x.clone(), f)),
        _ => None,
    };
    let energy_of = |s: &OdeState| exact.as_ref().map(|(xs, fs)| ode_energy(s, obj, params, xs, *fs));
    let gap_of = |s: &OdeState| obj.gap(&s.x);

    let gap0 = gap_of(&OdeState::initial(x0));
    let mut state = OdeState::initial(x0);
    let mut rows = Vec::with_capacity(steps + 1);
    rows.push(TimeRecord {
        t: 0.0,
        f_gap: gap0,
        energy: energy_of(&state).map(|e| e.eps),
        envelope: gap0.map(|g| params.envelope(g, 0.0)),
        certificate_slack: None,
        local_error: 0.0,
    });
    let mut rounding_prev = match (&exact, rows[0].energy) {
        (Some((xs, _)), Some(e)) => energy_rounding(&state, obj, params, xs, e),
        _ => 0.0,
    };
    let mut error = None;
    for j in 1..=steps {
        let t = j as f64 * dt;
        let k1 = hbfh_vector_field(&state, obj, params);
        let next = match rk4_step_from(&state, &k1, dt, obj, params) {
            Ok(mut s) => {
                s.t = t;
                s
            }
            Err(Error::NonFinite { .. }) => {
                error = Some(Error::NonFinite { iteration: j });
                break;
            }
            Err(e) => {
                error = Some(e);
                break;
            }
        };
        let energy = energy_of(&next);
        let local_error = match (energy, &exact) {
            (Some(e), Some((xs, _))) => {
                let half = rk4_step_from(&state, &k1, 0.5 * dt, obj, params)
                    .and_then(|s| rk4_step(&s, 0.5 * dt, obj, params));
                let truncation = match half {
                    Ok(h) => (energy_of(&h).map(|eh| eh.eps).unwrap_or(e.eps) - e.eps).abs() * 16.0 / 15.0,
                    Err(_) => f64::INFINITY,
                };
                let rounding = energy_rounding(&next, obj, params, xs, e.eps);
                let budget = truncation + rounding + rounding_prev;
                rounding_prev = rounding;
                budget
            }
            _ => 0.0,
        };
        let gap = gap_of(&next);
        rows.push(TimeRecord {
            t,
            f_gap: gap,
            energy: energy.map(|e| e.eps),
            envelope: gap0.map(|g| params.envelope(g, t)),
            certificate_slack: None,
            local_error,
        });
        state = next;
        if let (Some(g), Some(g0)) = (gap, gap0) {
            if g > crate::agm::DIVERGENCE_FACTOR * g0 && g > 1e-12 * (1.0 + obj.value(x0).abs()) {
                error = Some(Error::Diverged { iteration: j, gap: g, initial: g0 });
                break;
            }
        }
    }

    let certs = certify_samples(&rows, params.decay_rate(), &tol);
    for c in &certs {
        rows[c.k + 1].certificate_slack = Some(c.slack);
    }
    let (mut bound_checked, mut bound_violations) = (0, 0);
    for r in &rows {
        if let (Some(g), Some(env), Some(g0)) = (r.f_gap, r.envelope, gap0) {
            bound_checked += 1;
            if g > env * (1.0 + tol.global_rel) + tol.step_rel * g0 {
                bound_violations += 1;
            }
        }
    }

    let gaps: Vec<f64> = rows.iter().filter_map(|r| r.f_gap).collect();
    let rate_fitted = fit_linear_rate(&gaps, DEFAULT_FIT_WINDOW).rate().map(|r| r.ln_1p() / dt);
    let summary = Summary {
        solver: Solver::Ode,
        regime: params.regime(),
        problem: obj.name().to_string(),
        params: serde_json::to_value(params).unwrap_or(serde_json::Value::Null),
        certified: exact.is_some(),
        steps: rows.len() - 1,
        initial_gap: gap0,
        final_gap: gaps.last().copied(),
        certificates_checked: certs.len(),
        certificates_failed: certs.iter().filter(|c| !c.passed).count(),
        bound_checked,
        bound_violations,
        corollary_checked: 0,
        corollary_violations: 0,
        rate_theory: params.decay_rate(),
        rate_fitted,
        iterations_to_tol: iterations_to(&gaps, gaps.first().copied().unwrap_or(0.0), 1e-9),
        max_form_deviation: None,
        wall_time_s: start.elapsed().as_secs_f64(),
        error: error.as_ref().map(|e| e.to_string()),
    };
    Ok(Trace { rows: Rows::Times(rows), certificates: certs, summary, error })
}
