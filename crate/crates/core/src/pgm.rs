//! Inertial proximal gradient method for `F = f + g`:
//!
//! ```text
//! y_k     = x_k + (x_k − x_{k−1})/(1+αh)
//! x_{k+1} = prox_{h²g}(y_k − h²∇f(y_k))
//! ```
//!
//! The state at index `k` holds `x_k` and `x_{k+1}`; `v₀ = 0` gives `x₁ = x₀`.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::harness::{fit_linear_rate, DEFAULT_FIT_WINDOW};
use crate::oracle::{CompositeObjective, Point};
use crate::params::{check_constraints, PgmParams, Regime};
use crate::trace::{
    certify_contraction, iterations_to, CertificateResult, IterationRecord, Rows, Solver, Summary,
    Tolerances, Trace,
};

/// Relative slack of the proximal descent inequality and its corollary.
pub const LEMMA_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct PgmState {
    pub k: usize,
    /// `x_{k+1}`
    pub x_curr: Point,
    /// `x_k`
    pub x_prev: Point,
    /// Extrapolated point that produced `x_curr` (`x₀` before the first step).
    pub y: Point,
    /// `(x_{k+1} − x_k)/h`
    pub v: Point,
    /// `G_s(y)` for the step that produced `x_curr`.
    pub grad_map: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PgmEnergyTerms {
    pub phi: Point,
    pub e: f64,
}

pub fn pgm_init(obj: &CompositeObjective, params: &PgmParams, x0: &Point) -> Result<PgmState> {
    if x0.len() != obj.dim() {
        return Err(Error::DimensionMismatch { expected: obj.dim(), got: x0.len() });
    }
    let grad_map = crate::oracle::grad_mapping(obj, x0, params.step());
    Ok(PgmState {
        k: 0,
        x_curr: x0.clone(),
        x_prev: x0.clone(),
        y: x0.clone(),
        v: Point::zeros(x0.len()),
        grad_map,
    })
}

pub fn pgm_step(state: &PgmState, obj: &CompositeObjective, params: &PgmParams) -> Result<PgmState> {
    let h = params.h();
    let s = params.step();
    let k1 = state.k + 1;
    let y = &state.x_curr + (&state.x_curr - &state.x_prev) / (1.0 + params.alpha() * h);
    let grad = obj.smooth().gradient(&y);
    let x_next = obj.prox_term().prox(&(&y - &grad * s), s);
    if !x_next.iter().chain(grad.iter()).all(|v| v.is_finite()) {
        return Err(Error::NonFinite { iteration: k1 });
    }
    let grad_map = (&y - &x_next) / s;
    let v = (&x_next - &state.x_curr) / h;
    Ok(PgmState { k: k1, x_prev: state.x_curr.clone(), x_curr: x_next, y, v, grad_map })
}

/// `E_k = ½‖v_k + ξ(x_{k+1}−x*)‖² − ½η‖x_{k+1}−x*‖² + θ(F(x_{k+1})−F*)`.
pub fn pgm_energy(state: &PgmState, obj: &CompositeObjective, params: &PgmParams, xstar: &Point, fstar: f64) -> PgmEnergyTerms {
    let dx = &state.x_curr - xstar;
    let phi = &state.v + &dx * params.xi();
    let gap = obj.value(&state.x_curr) - fstar;
    let e = 0.5 * phi.norm_squared() - 0.5 * params.eta() * dx.norm_squared() + params.theta() * gap;
    PgmEnergyTerms { phi, e }
}

pub fn pgm_certify_step(k: usize, ek: f64, ek1: f64, params: &PgmParams, tol: &Tolerances, e0: f64) -> CertificateResult {
    certify_contraction(k, ek, ek1, 1.0 + params.a() * params.h(), tol.rel, tol.abs * (1.0 + e0.abs()))
}

/// Both sides of `F(y − sG_s(y)) ≤ F(x) + ⟨G_s(y), y−x⟩ − (s/2)‖G_s(y)‖² − (μ/2)‖y−x‖²`.
pub fn prox_descent_sides(obj: &CompositeObjective, y: &Point, x_ref: &Point, s: f64, mu: f64) -> (f64, f64) {
    let g = crate::oracle::grad_mapping(obj, y, s);
    let lhs = obj.value(&(y - &g * s));
    let d = y - x_ref;
    let rhs = obj.value(x_ref) + g.dot(&d) - 0.5 * s * g.norm_squared() - 0.5 * mu * d.norm_squared();
    (lhs, rhs)
}

/// Whether the proximal descent inequality holds within `1e−10·max(1, |F(x)|)`.
/// Use `mu = 0` for the merely convex version.
pub fn prox_descent_check(obj: &CompositeObjective, y: &Point, x_ref: &Point, s: f64, mu: f64) -> bool {
    let (lhs, rhs) = prox_descent_sides(obj, y, x_ref, s, mu);
    lhs <= rhs + LEMMA_TOL * obj.value(x_ref).abs().max(1.0)
}

/// Both sides of `⟨G, x_{k+1}−x*⟩ ≥ gap/(1−μs) − (s/2)‖G‖² + μ‖x_{k+1}−x*‖²/(2(1−μs))`.
pub fn prox_corollary_sides(state: &PgmState, obj: &CompositeObjective, xstar: &Point, fstar: f64, s: f64, mu: f64) -> (f64, f64) {
    let g = &state.grad_map;
    let dx = &state.x_curr - xstar;
    let lhs = g.dot(&dx);
    let c = 1.0 - mu * s;
    let gap = obj.value(&state.x_curr) - fstar;
    let rhs = gap / c - 0.5 * s * g.norm_squared() + mu / (2.0 * c) * dx.norm_squared();
    (lhs, rhs)
}

pub fn pgm_run(obj: &CompositeObjective, params: &PgmParams, x0: &Point, iterations: usize, certify: bool) -> Result<Trace> {
    pgm_run_with(obj, params, x0, iterations, certify, Tolerances::default())
}

pub fn pgm_run_with(
    obj: &CompositeObjective,
    params: &PgmParams,
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
    let mut state = pgm_init(obj, params, x0)?;
    let exact = match (obj.minimizer(), obj.min_value()) {
        (Some(x), Some(f)) => Some((x.clone(), f)),
        _ => None,
    };
    let certified = certify && exact.is_some();
    let check_corollary = certified && params.regime() == Regime::StronglyConvex;
    let s = params.step();

    let gap0 = obj.gap(x0);
    let mut rows = Vec::with_capacity(iterations + 1);
    let mut certs = Vec::new();
    let mut raw = Vec::new();
    let (mut bound_checked, mut bound_violations) = (0, 0);
    let (mut cor_checked, mut cor_violations) = (0, 0);
    let mut e0: Option<f64> = None;
    let mut e_prev: Option<f64> = None;
    let mut error = None;

    loop {
        let k = state.k;
        let (gx, gy) = match gap0 {
            Some(_) => (obj.gap(&state.x_curr), obj.gap(&state.y)),
            None => {
                raw.push((obj.value(&state.x_curr), obj.value(&state.y)));
                (None, None)
            }
        };
        let energy = exact.as_ref().filter(|_| certified).map(|(xs, fs)| pgm_energy(&state, obj, params, xs, *fs).e);
        let mut slack = None;
        if let (Some(e), Some(prev)) = (energy, e_prev) {
            let c = pgm_certify_step(k - 1, prev, e, params, &tol, e0.unwrap_or(prev));
            slack = Some(c.slack);
            certs.push(c);
        }
        if e0.is_none() {
            e0 = energy;
        }
        e_prev = energy;
        if check_corollary && k > 0 {
            let (xs, fs) = exact.as_ref().expect("certified implies x*");
            let (lhs, rhs) = prox_corollary_sides(&state, obj, xs, *fs, s, params.mu());
            cor_checked += 1;
            let scale = lhs.abs().max(rhs.abs()).max(1.0);
            if lhs < rhs - LEMMA_TOL * scale {
                cor_violations += 1;
            }
        }
        let bound = match gap0 {
            Some(g0) if certify => Some(params.gap_bound_factor(k) * g0),
            _ => None,
        };
        if let (Some(b), Some(g), Some(g0)) = (bound, gx, gap0) {
            bound_checked += 1;
            if !tol.bound_holds(g, b, g0) {
                bound_violations += 1;
            }
        }
        rows.push(IterationRecord {
            k,
            f_gap_x: gx,
            f_gap_y: gy,
            grad_norm: state.grad_map.norm(),
            energy,
            certificate_slack: slack,
            theorem_bound: bound,
        });
        if let (Some(g), Some(g0)) = (gx, gap0) {
            if g > crate::agm::DIVERGENCE_FACTOR * g0 && g > 1e-12 * (1.0 + obj.value(x0).abs()) {
                error = Some(Error::Diverged { iteration: k, gap: g, initial: g0 });
                break;
            }
        }
        if k == iterations {
            break;
        }
        match pgm_step(&state, obj, params) {
            Ok(next) => state = next,
            Err(e) => {
                error = Some(e);
                break;
            }
        }
    }

    if gap0.is_none() {
        let best = raw.iter().flat_map(|(a, b)| [*a, *b]).fold(f64::INFINITY, f64::min);
        for (r, (fx, fy)) in rows.iter_mut().zip(raw.iter()) {
            r.f_gap_x = Some(fx - best);
            r.f_gap_y = Some(fy - best);
        }
    }

    let gaps: Vec<f64> = rows.iter().filter_map(|r| r.f_gap_x).collect();
    let g0_ref = gaps.first().copied().unwrap_or(0.0);
    let summary = Summary {
        solver: Solver::Pgm,
        regime: params.regime(),
        problem: obj.smooth().name().to_string(),
        params: serde_json::to_value(params).unwrap_or(serde_json::Value::Null),
        certified,
        steps: rows.last().map(|r| r.k).unwrap_or(0),
        initial_gap: gap0,
        final_gap: gaps.last().copied(),
        certificates_checked: certs.len(),
        certificates_failed: certs.iter().filter(|c| !c.passed).count(),
        bound_checked,
        bound_violations,
        corollary_checked: cor_checked,
        corollary_violations: cor_violations,
        rate_theory: params.rho(),
        rate_fitted: fit_linear_rate(&gaps, DEFAULT_FIT_WINDOW).rate(),
        iterations_to_tol: iterations_to(&gaps, g0_ref, 1e-9),
        max_form_deviation: None,
        wall_time_s: start.elapsed().as_secs_f64(),
        error: error.as_ref().map(|e| e.to_string()),
    };
    Ok(Trace { rows: Rows::Iterations(rows), certificates: certs, summary, error })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agm::{agm_state_from_iterates, agm_step_checked};
    use crate::oracle::{conditioned_design, lasso_problem, quadratic_problem, sample_box, ProxTerm};
    use crate::params::{agm_params_unchecked, pgm_params_qg, pgm_params_sc, pgm_params_unchecked};
    use nalgebra::DMatrix;

    fn small_lasso(lambda: f64) -> CompositeObjective {
        let a = conditioned_design(12, 5, 0.1, 1.0, 21);
        let b = Point::from_vec((0..12).map(|i| (i as f64 * 0.7).sin() * 2.0).collect());
        lasso_problem(&a, &b, lambda).unwrap()
    }

    #[test]
    fn init_has_zero_velocity() {
        let obj = small_lasso(0.1);
        let p = pgm_params_sc(0.1, 1.0, 0.0).unwrap();
        let x0 = Point::from_element(5, 1.0);
        let s = pgm_init(&obj, &p, &x0).unwrap();
        assert_eq!(s.v.norm(), 0.0);
        let s1 = pgm_step(&s, &obj, &p).unwrap();
        assert_eq!(s1.y, x0);
    }

    #[test]
    fn minimizer_is_stationary() {
        let smooth = quadratic_problem(&[0.5, 2.0], &Point::zeros(2), 6).unwrap();
        let obj = CompositeObjective::new(smooth, ProxTerm::L1 { weight: 0.3 })
            .with_minimizer(Point::zeros(2), 0.0)
            .unwrap();
        let p = pgm_params_sc(0.5, 2.0, 0.5).unwrap();
        let mut s = pgm_init(&obj, &p, &Point::zeros(2)).unwrap();
        for _ in 0..5 {
            s = pgm_step(&s, &obj, &p).unwrap();
        }
        assert_eq!(s.x_curr.norm(), 0.0);
        assert_eq!(pgm_energy(&s, &obj, &p, &Point::zeros(2), 0.0).e, 0.0);
    }

    #[test]
    fn zero_prox_matches_agm_special_case() {
        let smooth = quadratic_problem(&[0.05, 0.4, 1.0], &Point::from_vec(vec![1.0, -1.0, 0.5]), 8).unwrap();
        let obj = CompositeObjective::new(smooth.clone(), ProxTerm::Zero);
        let p = pgm_params_sc(0.05, 1.0, 0.0).unwrap();
        let ah = p.alpha() * p.h();
        let ag = agm_params_unchecked(Regime::StronglyConvex, 0.05, 1.0, Some(1.0 + ah), 0.0, Some(p.alpha()));
        let x0 = Point::from_vec(vec![2.0, 1.0, -3.0]);
        let mut ps = pgm_init(&obj, &p, &x0).unwrap();
        let mut st = agm_state_from_iterates(&smooth, &ag, 0, &x0, &x0, &x0);
        for _ in 0..200 {
            ps = pgm_step(&ps, &obj, &p).unwrap();
            st = agm_step_checked(&st, &smooth, &ag).unwrap().0;
            // proximal x ↔ gradient-step y, proximal y ↔ extrapolated x
            assert!((&ps.x_curr - &st.y).norm() <= 1e-12 * st.y.norm().max(1.0));
        }
    }

    #[test]
    fn huge_damping_gives_plain_prox_gradient() {
        let obj = small_lasso(0.2);
        let p = pgm_params_unchecked(Regime::StronglyConvex, 0.1, 1.0, 0.0, Some(1e300));
        let x0 = Point::from_element(5, 1.0);
        let s1 = pgm_step(&pgm_init(&obj, &p, &x0).unwrap(), &obj, &p).unwrap();
        let s2 = pgm_step(&s1, &obj, &p).unwrap();
        let plain = obj.prox_term().prox(&(&s1.x_curr - obj.smooth().gradient(&s1.x_curr) * p.step()), p.step());
        assert!((s2.x_curr - plain).norm() <= 1e-15);
    }

    #[test]
    fn energy_substitutions() {
        let obj = small_lasso(0.1);
        let p = pgm_params_sc(0.1, 1.0, 0.0).unwrap();
        let (ah, xh) = ((p.alpha() - p.xi()) * p.h(), p.xi() * p.h());
        assert_eq!(p.eta(), 0.0);
        assert!((p.theta() - (1.0 + ah) * (1.0 + xh)).abs() < 1e-15);
        let z = pgm_params_unchecked(Regime::StronglyConvex, 0.1, 1.0, 0.0, Some(0.0));
        assert_eq!(z.xi(), 0.0);
        assert_eq!(z.theta(), 1.0);
        let s = pgm_step(&pgm_init(&obj, &z, &Point::from_element(5, 1.0)).unwrap(), &obj, &z).unwrap();
        let (xs, fs) = (obj.minimizer().unwrap(), obj.min_value().unwrap());
        let e = pgm_energy(&s, &obj, &z, xs, fs);
        assert_eq!(e.phi, s.v);
    }

    #[test]
    fn qg_initial_energy_bound() {
        let obj = small_lasso(0.1);
        for &omega in &[0.0, 0.5, 1.0] {
            let p = pgm_params_qg(0.1, 1.0, omega).unwrap();
            let x0 = Point::from_element(5, 2.0);
            let s = pgm_init(&obj, &p, &x0).unwrap();
            let e = pgm_energy(&s, &obj, &p, obj.minimizer().unwrap(), obj.min_value().unwrap()).e;
            assert!(e <= 2.0 * p.theta() * obj.gap(&x0).unwrap() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn certify_zero_and_boundary() {
        let p = pgm_params_sc(0.1, 1.0, 0.5).unwrap();
        let tol = Tolerances::default();
        assert!(pgm_certify_step(0, 0.0, 0.0, &p, &tol, 0.0).passed);
        let f = 1.0 + p.a() * p.h();
        let c = pgm_certify_step(0, 2.0, 2.0 / f, &p, &Tolerances { rel: 0.0, abs: 0.0, bound_abs: 0.0 }, 2.0);
        assert!(c.passed && c.slack.abs() <= 1e-15);
    }

    #[test]
    fn lasso_runs_certify() {
        let obj = small_lasso(0.1);
        let x0 = Point::from_element(5, 2.0);
        for &omega in &[0.0, 1.0] {
            let t = pgm_run(&obj, &pgm_params_sc(0.1, 1.0, omega).unwrap(), &x0, 1000, true).unwrap();
            assert!(t.summary.passed(), "{:?}", t.summary);
            assert!(t.summary.corollary_checked > 0);
            let t = pgm_run(&obj, &pgm_params_qg(0.1, 1.0, omega).unwrap(), &x0, 1000, true).unwrap();
            assert!(t.summary.passed(), "{:?}", t.summary);
        }
    }

    #[test]
    fn sc_omega0_corollary_bound() {
        let obj = small_lasso(0.1);
        let p = pgm_params_sc(0.1, 1.0, 0.0).unwrap();
        let x0 = Point::from_element(5, -1.5);
        let t = pgm_run(&obj, &p, &x0, 300, true).unwrap();
        let gap0 = obj.gap(&x0).unwrap();
        for r in t.iterations() {
            let b = 2.0 * gap0 / (1.0 + 0.1f64.sqrt()).powi(r.k as i32);
            assert!(r.f_gap_x.unwrap() <= b * (1.0 + 1e-9) + 1e-12 * (1.0 + gap0));
        }
    }

    #[test]
    fn zero_lambda_matches_smooth_run() {
        let a = conditioned_design(6, 3, 0.2, 1.0, 4);
        let b = Point::from_vec(vec![1.0, 2.0, 0.0, -1.0, 0.5, 0.3]);
        let obj = lasso_problem(&a, &b, 0.0).unwrap();
        let plain = CompositeObjective::new(obj.smooth().clone(), ProxTerm::Zero);
        let p = pgm_params_sc(0.2, 1.0, 0.5).unwrap();
        let x0 = Point::from_element(3, 1.0);
        let (mut s1, mut s2) = (pgm_init(&obj, &p, &x0).unwrap(), pgm_init(&plain, &p, &x0).unwrap());
        for _ in 0..50 {
            s1 = pgm_step(&s1, &obj, &p).unwrap();
            s2 = pgm_step(&s2, &plain, &p).unwrap();
        }
        assert_eq!(s1.x_curr, s2.x_curr);
    }

    #[test]
    fn descent_lemma_cases() {
        let obj = small_lasso(0.3);
        let (xs, s) = (obj.minimizer().unwrap().clone(), 1.0 / obj.lipschitz());
        let (lhs, rhs) = prox_descent_sides(&obj, &xs, &xs, s, 0.1);
        assert!((lhs - rhs).abs() <= 1e-10 * obj.min_value().unwrap().abs().max(1.0));

        let smooth = quadratic_problem(&[0.3, 1.0, 2.0], &Point::from_vec(vec![1.0, 0.0, 2.0]), 9).unwrap();
        let plain = CompositeObjective::new(smooth, ProxTerm::Zero);
        let ys = sample_box(3, 1000, 5.0, 1);
        let xs_ = sample_box(3, 1000, 5.0, 2);
        for (y, x) in ys.iter().zip(&xs_) {
            assert!(prox_descent_check(&plain, y, x, 0.5, 0.3));
        }
        let ys = sample_box(5, 200, 3.0, 3);
        let xs_ = sample_box(5, 200, 3.0, 4);
        for (y, x) in ys.iter().zip(&xs_) {
            assert!(prox_descent_check(&obj, y, x, s, 0.0));
        }
    }

    #[test]
    fn rank_deficient_is_rejected_upstream() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(lasso_problem(&a, &Point::zeros(2), 0.1).is_err());
    }
}
