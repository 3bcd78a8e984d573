//! Objective oracles, built-in test problems and independent validators.
//!
//! A [`SmoothObjective`] bundles a value/gradient pair with the constants the
//! convergence theory needs (`L`, `μ` in its several flavours, and the exact
//! minimizer when one is known). [`CompositeObjective`] adds a proximable
//! term `g` for the proximal solver.

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Points and vectors are dense 64-bit column vectors.
pub type Point = DVector<f64>;

type ValueFn = Arc<dyn Fn(&Point) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&Point) -> Point + Send + Sync>;
type ProxFn = Arc<dyn Fn(&Point, f64) -> Point + Send + Sync>;

/// Iteration cap of the reference proximal-gradient oracle.
pub const REFERENCE_MAX_ITERS: usize = 10_000_000;

/// Dense quadratic data `f(x) = ½ xᵀQx − bᵀx`.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub hessian: DMatrix<f64>,
    pub linear: Point,
}

/// Smooth objective with its regularity constants.
#[derive(Clone)]
pub struct SmoothObjective {
    name: String,
    dim: usize,
    value: ValueFn,
    gradient: GradFn,
    exact_gap: Option<ValueFn>,
    lipschitz: f64,
    strong_convexity: Option<f64>,
    pl_constant: Option<f64>,
    qg_constant: Option<f64>,
    minimizer: Option<Point>,
    min_value: Option<f64>,
    quadratic: Option<QuadraticForm>,
}

impl fmt::Debug for SmoothObjective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SmoothObjective")
            .field("name", &self.name)
            .field("dim", &self.dim)
            .field("lipschitz", &self.lipschitz)
            .field("strong_convexity", &self.strong_convexity)
            .field("pl_constant", &self.pl_constant)
            .field("qg_constant", &self.qg_constant)
            .field("min_value", &self.min_value)
            .finish()
    }
}

fn check_mu(kind: &str, mu: f64, lipschitz: f64) -> Result<()> {
    if !(mu > 0.0 && mu < lipschitz) {
        return Err(Error::InvalidInput(format!(
            "{kind} constant must satisfy 0 < μ < L (μ = {mu}, L = {lipschitz})"
        )));
    }
    Ok(())
}

impl SmoothObjective {
    pub fn new<F, G>(name: &str, dim: usize, lipschitz: f64, value: F, gradient: G) -> Result<Self>
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
        G: Fn(&Point) -> Point + Send + Sync + 'static,
    {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if !(lipschitz > 0.0 && lipschitz.is_finite()) {
            return Err(Error::InvalidInput(format!("L must be positive, got {lipschitz}")));
        }
        Ok(Self {
            name: name.to_string(),
            dim,
            value: Arc::new(value),
            gradient: Arc::new(gradient),
            exact_gap: None,
            lipschitz,
            strong_convexity: None,
            pl_constant: None,
            qg_constant: None,
            minimizer: None,
            min_value: None,
            quadratic: None,
        })
    }

    pub fn with_strong_convexity(mut self, mu: f64) -> Result<Self> {
        check_mu("strong convexity", mu, self.lipschitz)?;
        self.strong_convexity = Some(mu);
        Ok(self)
    }

    pub fn with_pl_constant(mut self, mu: f64) -> Result<Self> {
        check_mu("PL", mu, self.lipschitz)?;
        self.pl_constant = Some(mu);
        Ok(self)
    }

    pub fn with_qg_constant(mut self, mu: f64) -> Result<Self> {
        check_mu("quadratic growth", mu, self.lipschitz)?;
        self.qg_constant = Some(mu);
        Ok(self)
    }

    pub fn with_minimizer(mut self, x: Point, fstar: f64) -> Result<Self> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        self.minimizer = Some(x);
        self.min_value = Some(fstar);
        Ok(self)
    }

    /// Installs an evaluator of `f(x) − f*` that avoids the cancellation of
    /// subtracting two nearly equal values.
    pub fn with_exact_gap<F>(mut self, gap: F) -> Self
    where
        F: Fn(&Point) -> f64 + Send + Sync + 'static,
    {
        self.exact_gap = Some(Arc::new(gap));
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn value(&self, x: &Point) -> f64 {
        (self.value)(x)
    }

    pub fn gradient(&self, x: &Point) -> Point {
        (self.gradient)(x)
    }

    /// `f(x) − f*`, when `f*` is known.
    pub fn gap(&self, x: &Point) -> Option<f64> {
        match (&self.exact_gap, self.min_value) {
            (Some(g), Some(_)) => Some(g(x)),
            (None, Some(fstar)) => Some(self.value(x) - fstar),
            _ => None,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn strong_convexity(&self) -> Option<f64> {
        self.strong_convexity
    }

    pub fn pl_constant(&self) -> Option<f64> {
        self.pl_constant
    }

    pub fn qg_constant(&self) -> Option<f64> {
        self.qg_constant
    }

    pub fn minimizer(&self) -> Option<&Point> {
        self.minimizer.as_ref()
    }

    pub fn min_value(&self) -> Option<f64> {
        self.min_value
    }

    pub fn quadratic_form(&self) -> Option<&QuadraticForm> {
        self.quadratic.as_ref()
    }
}

/// Seeded Haar-distributed orthogonal matrix. Seed 0 is reserved for the identity.
pub fn random_orthogonal(dim: usize, seed: u64) -> DMatrix<f64> {
    if seed == 0 {
        return DMatrix::identity(dim, dim);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(dim, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..dim {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Strongly convex quadratic `½ xᵀQx − bᵀx` with `Q = UᵀDU`, `D = diag(spectrum)`.
pub fn quadratic_problem(spectrum: &[f64], b: &Point, seed: u64) -> Result<SmoothObjective> {
    let dim = spectrum.len();
    if dim == 0 {
        return Err(Error::InvalidInput("spectrum must be non-empty".into()));
    }
    if b.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: b.len() });
    }
    if let Some(bad) = spectrum.iter().find(|&&s| !(s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidInput(format!("spectrum entries must be positive, got {bad}")));
    }
    let lipschitz = spectrum.iter().cloned().fold(f64::MIN, f64::max);
    let mu = spectrum.iter().cloned().fold(f64::MAX, f64::min);

    let u = random_orthogonal(dim, seed);
    let d = DMatrix::from_diagonal(&DVector::from_column_slice(spectrum));
    let mut q = u.transpose() * d * &u;
    // exact symmetry keeps the Cholesky factor and the gap evaluator consistent
    q = (&q + q.transpose()) * 0.5;

    let chol = q
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InvalidInput("quadratic Hessian is not positive definite".into()))?;
    let mut xstar = chol.solve(b);
    let r = b - &q * &xstar;
    xstar += chol.solve(&r);
    let residual = (b - &q * &xstar).norm();
    let scale = lipschitz * xstar.norm() + b.norm();
    if residual > 1e-12 * scale.max(1.0) {
        return Err(Error::InvalidInput(format!("linear solve residual {residual:e} too large")));
    }
    let fstar = -0.5 * b.dot(&xstar);

    let (qv, bv) = (q.clone(), b.clone());
    let (qg, bg) = (q.clone(), b.clone());
    let (qe, xe) = (q.clone(), xstar.clone());
    let mut obj = SmoothObjective::new(
        "quadratic",
        dim,
        lipschitz,
        move |x| 0.5 * x.dot(&(&qv * x)) - bv.dot(x),
        move |x| &qg * x - &bg,
    )?
    .with_minimizer(xstar, fstar)?
    .with_exact_gap(move |x| {
        let e = x - &xe;
        0.5 * e.dot(&(&qe * &e))
    });
    if mu < lipschitz {
        obj = obj
            .with_strong_convexity(mu)?
            .with_pl_constant(mu)?
            .with_qg_constant(mu)?;
    }
    obj.quadratic = Some(QuadraticForm { hessian: q, linear: b.clone() });
    Ok(obj)
}

/// Spectrum of `dim` values spread geometrically over `[mu, lipschitz]`.
pub fn geometric_spectrum(dim: usize, mu: f64, lipschitz: f64) -> Vec<f64> {
    if dim == 1 {
        return vec![lipschitz];
    }
    let ratio = lipschitz / mu;
    (0..dim)
        .map(|i| {
            if i == 0 {
                mu
            } else if i == dim - 1 {
                lipschitz
            } else {
                mu * ratio.powf(i as f64 / (dim - 1) as f64)
            }
        })
        .collect()
}

/// Nonconvex 1-D objective `x² + 3 sin²(x)`, which satisfies the PL inequality.
pub fn pl_sine_problem() -> SmoothObjective {
    let base = SmoothObjective::new(
        "pl_sine",
        1,
        8.0,
        |x| x[0] * x[0] + 3.0 * x[0].sin().powi(2),
        |x| Point::from_element(1, 2.0 * x[0] + 3.0 * (2.0 * x[0]).sin()),
    )
    .and_then(|o| o.with_minimizer(Point::zeros(1), 0.0))
    .expect("pl_sine construction is infallible");
    let mu = estimate_pl_constant(&base, -20.0, 20.0, 20_001)
        .expect("pl_sine grid has points away from the minimizer");
    base.with_pl_constant(mu).expect("grid PL constant lies in (0, L)")
}

/// Proximable convex term `g`.
#[derive(Clone)]
pub enum ProxTerm {
    Zero,
    /// `weight · ‖x‖₁`
    L1 { weight: f64 },
    Custom { eval: ValueFn, prox: ProxFn },
}

impl fmt::Debug for ProxTerm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProxTerm::Zero => write!(f, "Zero"),
            ProxTerm::L1 { weight } => write!(f, "L1 {{ weight: {weight} }}"),
            ProxTerm::Custom { .. } => write!(f, "Custom"),
        }
    }
}

/// Component-wise `sign(z)·max(|z| − t, 0)`.
pub fn soft_threshold(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

impl ProxTerm {
    pub fn custom<E, P>(eval: E, prox: P) -> Self
    where
        E: Fn(&Point) -> f64 + Send + Sync + 'static,
        P: Fn(&Point, f64) -> Point + Send + Sync + 'static,
    {
        ProxTerm::Custom { eval: Arc::new(eval), prox: Arc::new(prox) }
    }

    /// `g(x)`; may be `+∞` for indicator-type terms.
    pub fn eval(&self, x: &Point) -> f64 {
        match self {
            ProxTerm::Zero => 0.0,
            ProxTerm::L1 { weight } => weight * x.iter().map(|v| v.abs()).sum::<f64>(),
            ProxTerm::Custom { eval, .. } => eval(x),
        }
    }

    /// `prox_{s g}(z) = argmin_u g(u) + ‖u − z‖²/(2s)`.
    pub fn prox(&self, z: &Point, s: f64) -> Point {
        match self {
            ProxTerm::Zero => z.clone(),
            ProxTerm::L1 { weight } => z.map(|v| soft_threshold(v, s * weight)),
            ProxTerm::Custom { prox, .. } => prox(z, s),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ProxTerm::Zero => true,
            ProxTerm::L1 { weight } => *weight == 0.0,
            ProxTerm::Custom { .. } => false,
        }
    }
}

/// Composite objective `F = f + g`.
#[derive(Debug, Clone)]
pub struct CompositeObjective {
    smooth: SmoothObjective,
    prox_term: ProxTerm,
    minimizer: Option<Point>,
    min_value: Option<f64>,
    qg_constant: Option<f64>,
}

impl CompositeObjective {
    pub fn new(smooth: SmoothObjective, prox_term: ProxTerm) -> Self {
        Self { smooth, prox_term, minimizer: None, min_value: None, qg_constant: None }
    }

    pub fn with_minimizer(mut self, x: Point, fstar: f64) -> Result<Self> {
        if x.len() != self.smooth.dim() {
            return Err(Error::DimensionMismatch { expected: self.smooth.dim(), got: x.len() });
        }
        self.minimizer = Some(x);
        self.min_value = Some(fstar);
        Ok(self)
    }

    pub fn with_qg_constant(mut self, mu: f64) -> Result<Self> {
        check_mu("quadratic growth", mu, self.smooth.lipschitz())?;
        self.qg_constant = Some(mu);
        Ok(self)
    }

    pub fn smooth(&self) -> &SmoothObjective {
        &self.smooth
    }

    pub fn prox_term(&self) -> &ProxTerm {
        &self.prox_term
    }

    pub fn dim(&self) -> usize {
        self.smooth.dim()
    }

    pub fn lipschitz(&self) -> f64 {
        self.smooth.lipschitz()
    }

    pub fn value(&self, x: &Point) -> f64 {
        self.smooth.value(x) + self.prox_term.eval(x)
    }

    pub fn gap(&self, x: &Point) -> Option<f64> {
        self.min_value.map(|fstar| self.value(x) - fstar)
    }

    pub fn minimizer(&self) -> Option<&Point> {
        self.minimizer.as_ref()
    }

    pub fn min_value(&self) -> Option<f64> {
        self.min_value
    }

    pub fn qg_constant(&self) -> Option<f64> {
        self.qg_constant
    }
}

/// Gradient mapping `G_s(y) = (y − prox_{sg}(y − s∇f(y)))/s`.
pub fn grad_mapping(obj: &CompositeObjective, y: &Point, s: f64) -> Point {
    let grad = obj.smooth.gradient(y);
    if obj.prox_term.is_zero() {
        return grad;
    }
    let next = obj.prox_term.prox(&(y - &grad * s), s);
    (y - next) / s
}

/// Plain proximal gradient (step `1/L`, no momentum) run until `‖G_s‖ ≤ tol`.
pub fn reference_minimizer(obj: &CompositeObjective, tol: f64) -> Result<(Point, f64)> {
    reference_minimizer_from(obj, &Point::zeros(obj.dim()), tol, REFERENCE_MAX_ITERS)
}

pub fn reference_minimizer_from(
    obj: &CompositeObjective,
    x0: &Point,
    tol: f64,
    max_iters: usize,
) -> Result<(Point, f64)> {
    if !(tol > 0.0) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    let s = 1.0 / obj.lipschitz();
    let mut x = x0.clone();
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let grad = obj.smooth.gradient(&x);
        let next = obj.prox_term.prox(&(&x - &grad * s), s);
        residual = ((&x - &next) / s).norm();
        if !residual.is_finite() {
            break;
        }
        if residual <= tol {
            let fx = obj.value(&x);
            return Ok((x, fx));
        }
        x = next;
    }
    Err(Error::NotConverged { iterations: max_iters, residual })
}

/// `F = ½‖Ax − b‖² + λ‖x‖₁` with `x*`, `F*` from the reference oracle at `1e−12`.
///
/// When the oracle hits its iteration cap the objective is returned without
/// a minimizer; energy certificates are then unavailable.
pub fn lasso_problem(a: &DMatrix<f64>, b: &Point, lambda: f64) -> Result<CompositeObjective> {
    let (rows, dim) = a.shape();
    if b.len() != rows {
        return Err(Error::DimensionMismatch { expected: rows, got: b.len() });
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::InvalidInput(format!("lambda must be non-negative, got {lambda}")));
    }
    let ata = a.transpose() * a;
    let ata = (&ata + ata.transpose()) * 0.5;
    let eig = ata.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.max();
    let min_eig = eig.eigenvalues.min();
    if rows < dim || !(min_eig > 1e-12 * max_eig) {
        return Err(Error::RankDeficient { min_eig, max_eig });
    }
    let atb = a.transpose() * b;

    let ls = ata
        .clone()
        .cholesky()
        .ok_or(Error::RankDeficient { min_eig, max_eig })?
        .solve(&atb);
    let (av, bv) = (a.clone(), b.clone());
    let (ag, atb_g) = (ata.clone(), atb.clone());
    let value = move |x: &Point| 0.5 * (&av * x - &bv).norm_squared();
    let f_ls = value(&ls);
    let mut smooth = SmoothObjective::new("lasso", dim, max_eig, value, move |x| &ag * x - &atb_g)?
        .with_minimizer(ls, f_ls)?;
    let mu = (min_eig < max_eig).then_some(min_eig);
    if let Some(mu) = mu {
        smooth = smooth
            .with_strong_convexity(mu)?
            .with_pl_constant(mu)?
            .with_qg_constant(mu)?;
    }
    let term = ProxTerm::L1 { weight: lambda };
    let mut obj = CompositeObjective::new(smooth, term);
    if let Some(mu) = mu {
        obj = obj.with_qg_constant(mu)?;
    }
    match reference_minimizer(&obj, 1e-12) {
        Ok((xstar, fstar)) => obj.with_minimizer(xstar, fstar),
        Err(Error::NotConverged { .. }) => Ok(obj),
        Err(e) => Err(e),
    }
}

/// Seeded design matrix `A = U diag(σ) Vᵀ` (`rows × dim`) with `σᵢ²` spread over `[mu, lipschitz]`.
pub fn conditioned_design(rows: usize, dim: usize, mu: f64, lipschitz: f64, seed: u64) -> DMatrix<f64> {
    assert!(rows >= dim, "design needs at least as many rows as columns");
    let u = random_orthogonal(rows, seed.wrapping_mul(2).wrapping_add(1));
    let v = random_orthogonal(dim, seed.wrapping_mul(2).wrapping_add(2));
    let spectrum = geometric_spectrum(dim, mu, lipschitz);
    let mut s = DMatrix::zeros(rows, dim);
    for (i, ev) in spectrum.iter().enumerate() {
        s[(i, i)] = ev.sqrt();
    }
    u * s * v.transpose()
}

/// Max over `points` of `‖∇f − fd‖ / max(1, ‖∇f‖)` with central differences of width `eps`.
pub fn finite_diff_gradient_check(obj: &SmoothObjective, points: &[Point], eps: f64) -> Result<f64> {
    if !(1e-8..=1e-4).contains(&eps) {
        return Err(Error::InvalidInput(format!("eps must lie in [1e-8, 1e-4], got {eps}")));
    }
    let mut worst = 0.0_f64;
    for x in points {
        let grad = obj.gradient(x);
        let mut fd = Point::zeros(x.len());
        let mut probe = x.clone();
        for i in 0..x.len() {
            let xi = probe[i];
            probe[i] = xi + eps;
            let up = obj.value(&probe);
            probe[i] = xi - eps;
            let down = obj.value(&probe);
            probe[i] = xi;
            fd[i] = (up - down) / (2.0 * eps);
        }
        let err = (&grad - &fd).norm() / grad.norm().max(1.0);
        worst = worst.max(err);
    }
    Ok(worst)
}

/// Seeded uniform samples in the box `[−half_width, half_width]^dim`.
pub fn sample_box(dim: usize, count: usize, half_width: f64, seed: u64) -> Vec<Point> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| Point::from_fn(dim, |_, _| rng.random_range(-half_width..=half_width)))
        .collect()
}

/// Minimum of `‖∇f(x)‖² / (2(f(x) − f*))` over the supplied points, skipping
/// points within `1e−12` of `f*`.
pub fn estimate_pl_constant_at(obj: &SmoothObjective, points: &[Point]) -> Result<f64> {
    if obj.min_value().is_none() {
        return Err(Error::Undefined("PL estimate needs f*".into()));
    }
    let mut best = f64::INFINITY;
    for x in points {
        let gap = obj.gap(x).expect("f* checked above");
        if gap < 1e-12 {
            continue;
        }
        let ratio = obj.gradient(x).norm_squared() / (2.0 * gap);
        best = best.min(ratio);
    }
    if best.is_finite() {
        Ok(best)
    } else {
        Err(Error::Undefined("every sample lies within 1e-12 of f*".into()))
    }
}

/// Grid version of [`estimate_pl_constant_at`]: `n` nodes per axis over
/// `[lo, hi]^d`, for `d ≤ 3`.
pub fn estimate_pl_constant(obj: &SmoothObjective, lo: f64, hi: f64, n: usize) -> Result<f64> {
    let dim = obj.dim();
    if dim > 3 {
        return Err(Error::InvalidInput(format!(
            "grid PL estimate supports dimension ≤ 3, got {dim}; supply points instead"
        )));
    }
    if n < 2 || !(hi > lo) {
        return Err(Error::InvalidInput("grid needs n ≥ 2 and hi > lo".into()));
    }
    let node = |i: usize| lo + (hi - lo) * i as f64 / (n - 1) as f64;
    let total = n.pow(dim as u32);
    let points: Vec<Point> = (0..total)
        .map(|mut idx| {
            Point::from_fn(dim, |_, _| {
                let v = node(idx % n);
                idx /= n;
                v
            })
        })
        .collect();
    estimate_pl_constant_at(obj, &points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn approx(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn quadratic_zero_rhs_has_origin_minimizer() {
        let obj = quadratic_problem(&[1.0, 100.0], &Point::zeros(2), 7).unwrap();
        assert_eq!(obj.lipschitz(), 100.0);
        assert_eq!(obj.strong_convexity(), Some(1.0));
        assert!(obj.minimizer().unwrap().norm() < 1e-15);
        assert!(obj.min_value().unwrap().abs() < 1e-15);
    }

    #[test]
    fn quadratic_identity_rotation_solves_by_hand() {
        let b = Point::from_vec(vec![1.0, 0.0]);
        let obj = quadratic_problem(&[1.0, 100.0], &b, 0).unwrap();
        let x = obj.minimizer().unwrap();
        assert!(approx(x[0], 1.0, 1e-14) && approx(x[1], 0.0, 1e-14));
        assert!(approx(obj.min_value().unwrap(), -0.5, 1e-14));
    }

    #[test]
    fn quadratic_one_dimensional() {
        let obj = quadratic_problem(&[5.0], &Point::from_element(1, 10.0), 3).unwrap();
        let x = Point::from_element(1, 1.5);
        assert!(approx(obj.value(&x), 2.5 * 2.25 - 15.0, 1e-12));
        assert!(approx(obj.minimizer().unwrap()[0], 2.0, 1e-14));
        assert!(approx(obj.min_value().unwrap(), -10.0, 1e-12));
        // μ = L collapses the μ-constants
        assert_eq!(obj.strong_convexity(), None);
    }

    #[test]
    fn quadratic_rejects_bad_input() {
        assert!(matches!(
            quadratic_problem(&[1.0, -2.0], &Point::zeros(2), 1),
            Err(Error::InvalidInput(_))
        ));
        assert!(matches!(
            quadratic_problem(&[1.0, 2.0], &Point::zeros(3), 1),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn random_orthogonal_is_orthogonal() {
        let u = random_orthogonal(6, 42);
        let err = (u.transpose() * &u - DMatrix::identity(6, 6)).norm();
        assert!(err < 1e-13);
    }

    #[test]
    fn pl_sine_closed_forms() {
        let obj = pl_sine_problem();
        let zero = Point::zeros(1);
        assert_eq!(obj.value(&zero), 0.0);
        assert_eq!(obj.gradient(&zero)[0], 0.0);
        let pi = Point::from_element(1, PI);
        assert!(approx(obj.value(&pi), PI * PI, 1e-12));
        assert!(approx(obj.gradient(&pi)[0], 2.0 * PI, 1e-12));
        assert_eq!(obj.lipschitz(), 8.0);
        assert_eq!(obj.strong_convexity(), None);
        let mu = obj.pl_constant().unwrap();
        assert!(mu > 0.0 && mu <= 1.0, "mu = {mu}");
    }

    #[test]
    fn pl_sine_lipschitz_matches_curvature_maximum() {
        // f'' = 2 + 6 cos 2x, maximised on a fine grid
        let max = (0..200_001)
            .map(|i| -10.0 + 20.0 * i as f64 / 200_000.0)
            .map(|x: f64| 2.0 + 6.0 * (2.0 * x).cos())
            .fold(f64::MIN, f64::max);
        assert!(approx(max, 8.0, 1e-9));
    }

    #[test]
    fn soft_threshold_cases() {
        assert_eq!(soft_threshold(3.0, 1.0), 2.0);
        assert_eq!(soft_threshold(-0.5, 1.0), 0.0);
        assert_eq!(soft_threshold(-3.0, 1.0), -2.0);
    }

    fn one_dim_lasso(center: f64, lambda: f64) -> CompositeObjective {
        // f = ½(x − c)² written as ½‖Ax − b‖² with A = [1; 0.1] tweaked to keep μ < L
        let a = DMatrix::from_row_slice(2, 1, &[1.0, 0.0]);
        let b = Point::from_vec(vec![center, 0.0]);
        lasso_problem(&a, &b, lambda).unwrap()
    }

    #[test]
    fn grad_mapping_cases() {
        // f = ½x², g = |x|, y = 3, s = 1 → G = 3
        let obj = one_dim_lasso(0.0, 1.0);
        let g = grad_mapping(&obj, &Point::from_element(1, 3.0), 1.0);
        assert!(approx(g[0], 3.0, 1e-15));

        let smooth = quadratic_problem(&[1.0, 4.0], &Point::from_vec(vec![1.0, 2.0]), 5).unwrap();
        let plain = CompositeObjective::new(smooth.clone(), ProxTerm::Zero);
        let y = Point::from_vec(vec![0.3, -1.2]);
        assert_eq!(grad_mapping(&plain, &y, 0.7), smooth.gradient(&y));
    }

    #[test]
    fn reference_minimizer_one_dim_lasso() {
        // f = ½(x − 3)², λ = 1 → soft-threshold fixed point x* = 2
        let obj = one_dim_lasso(3.0, 1.0);
        let x = obj.minimizer().unwrap();
        assert!(approx(x[0], 2.0, 1e-12));
        let gs = grad_mapping(&obj, x, 1.0 / obj.lipschitz());
        assert!(gs.norm() <= 1e-8);
    }

    #[test]
    fn reference_minimizer_large_lambda_gives_zero() {
        let a = conditioned_design(8, 4, 0.5, 5.0, 11);
        let b = Point::from_vec(vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.0, -1.0, 2.0]);
        let threshold = (a.transpose() * &b).amax();
        let obj = lasso_problem(&a, &b, threshold * 1.01).unwrap();
        assert_eq!(obj.minimizer().unwrap().amax(), 0.0);
    }

    #[test]
    fn reference_minimizer_zero_lambda_matches_least_squares() {
        let a = conditioned_design(8, 4, 0.5, 5.0, 3);
        let b = Point::from_vec(vec![1.0, -2.0, 0.5, 3.0, 0.0, 1.0, -1.0, 2.0]);
        let obj = lasso_problem(&a, &b, 0.0).unwrap();
        let ls = (a.transpose() * &a).cholesky().unwrap().solve(&(a.transpose() * &b));
        assert!((obj.minimizer().unwrap() - ls).norm() <= 1e-10);
    }

    #[test]
    fn reference_minimizer_rejects_nonpositive_tol() {
        let obj = one_dim_lasso(3.0, 1.0);
        assert!(reference_minimizer(&obj, 0.0).is_err());
    }

    #[test]
    fn reference_minimizer_reports_cap() {
        let a = conditioned_design(6, 3, 1e-3, 1.0, 2);
        let b = Point::from_element(6, 1.0);
        let obj = lasso_problem(&a, &b, 0.01).unwrap();
        let r = reference_minimizer_from(&obj, &Point::zeros(3), 1e-12, 5);
        assert!(matches!(r, Err(Error::NotConverged { iterations: 5, .. })));
    }

    #[test]
    fn lasso_rejects_rank_deficient() {
        let a = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 2.0, 4.0, 3.0, 6.0]);
        let b = Point::from_element(3, 1.0);
        assert!(matches!(lasso_problem(&a, &b, 0.1), Err(Error::RankDeficient { .. })));
    }

    #[test]
    fn finite_diff_cases() {
        let quad = quadratic_problem(&[1.0, 100.0], &Point::zeros(2), 9).unwrap();
        let pts = sample_box(2, 16, 5.0, 1);
        assert!(finite_diff_gradient_check(&quad, &pts, 1e-6).unwrap() <= 1e-7);

        let sine = pl_sine_problem();
        let x = Point::from_element(1, 1.0);
        let expected = 2.0 + 3.0 * (2.0_f64).sin();
        assert!(approx(sine.gradient(&x)[0], expected, 1e-15));
        assert!(finite_diff_gradient_check(&sine, &[x], 1e-6).unwrap() <= 1e-6);

        let constant =
            SmoothObjective::new("constant", 3, 1.0, |_| 4.0, |x| Point::zeros(x.len())).unwrap();
        assert_eq!(finite_diff_gradient_check(&constant, &pts_3(), 1e-5).unwrap(), 0.0);

        assert!(finite_diff_gradient_check(&quad, &pts, 1e-2).is_err());
    }

    fn pts_3() -> Vec<Point> {
        sample_box(3, 4, 2.0, 5)
    }

    #[test]
    fn pl_estimate_cases() {
        let mu = 0.3;
        let half = SmoothObjective::new("half", 1, 1.0, move |x| 0.5 * mu * x[0] * x[0], move |x| x * mu)
            .unwrap()
            .with_minimizer(Point::zeros(1), 0.0)
            .unwrap();
        assert!(approx(estimate_pl_constant(&half, -2.0, 2.0, 401).unwrap(), mu, 1e-12));

        // axis-aligned: the grid contains the λ_min eigenvector
        let quad = quadratic_problem(&[1.0, 100.0], &Point::zeros(2), 0).unwrap();
        let est = estimate_pl_constant(&quad, -1.0, 1.0, 201).unwrap();
        assert!(approx(est, 1.0, 1e-12), "est = {est}");
        // rotated: a minimum over samples can only overshoot λ_min
        let quad = quadratic_problem(&[1.0, 100.0], &Point::zeros(2), 4).unwrap();
        let est = estimate_pl_constant(&quad, -1.0, 1.0, 201).unwrap();
        assert!((1.0 - 1e-12..=1.01).contains(&est), "est = {est}");

        let flat = SmoothObjective::new("flat", 1, 1.0, |_| 0.0, |x| Point::zeros(x.len()))
            .unwrap()
            .with_minimizer(Point::zeros(1), 0.0)
            .unwrap();
        assert!(matches!(estimate_pl_constant(&flat, -1.0, 1.0, 11), Err(Error::Undefined(_))));
    }

    #[test]
    fn constants_must_satisfy_ordering() {
        let obj = SmoothObjective::new("q", 1, 2.0, |x| x[0] * x[0], |x| x * 2.0).unwrap();
        assert!(obj.clone().with_strong_convexity(2.0).is_err());
        assert!(obj.with_pl_constant(0.0).is_err());
    }
}
