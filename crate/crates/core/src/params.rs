//! Closed-form parameter bundles for the discrete methods and the continuous
//! dynamics, together with the hypothesis checks each convergence theorem needs.

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

/// Relative slack granted to hypotheses that hold with equality at the default parameters.
const BOUNDARY_TOL: f64 = 1e-12;

/// Geometric assumption on the objective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Regime {
    StronglyConvex,
    QuadraticGrowth,
    PolyakLojasiewicz,
}

impl Regime {
    pub fn tag(self) -> &'static str {
        match self {
            Regime::StronglyConvex => "sc",
            Regime::QuadraticGrowth => "qg",
            Regime::PolyakLojasiewicz => "pl",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sc" | "strongly_convex" | "stronglyconvex" => Ok(Regime::StronglyConvex),
            "qg" | "quadratic_growth" | "quadraticgrowth" => Ok(Regime::QuadraticGrowth),
            "pl" | "polyak_lojasiewicz" | "polyaklojasiewicz" => Ok(Regime::PolyakLojasiewicz),
            other => Err(Error::Config(format!("unknown regime '{other}' (expected sc, qg or pl)"))),
        }
    }
}

/// A violated hypothesis: the inequality that failed and its two sides.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Violation {
    pub hypothesis: String,
    pub lhs: f64,
    pub rhs: f64,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (lhs = {:.6e}, rhs = {:.6e})", self.hypothesis, self.lhs, self.rhs)
    }
}

/// Collects violations; `le` and `ge` allow a relative boundary slack.
#[derive(Default)]
struct Checker(Vec<Violation>);

impl Checker {
    fn push(&mut self, hypothesis: &str, lhs: f64, rhs: f64) {
        self.0.push(Violation { hypothesis: hypothesis.to_string(), lhs, rhs });
    }

    fn le(&mut self, hypothesis: &str, lhs: f64, rhs: f64) {
        let slack = BOUNDARY_TOL * lhs.abs().max(rhs.abs()).max(1e-300);
        if !(lhs <= rhs + slack) {
            self.push(hypothesis, lhs, rhs);
        }
    }

    fn ge(&mut self, hypothesis: &str, lhs: f64, rhs: f64) {
        let slack = BOUNDARY_TOL * lhs.abs().max(rhs.abs()).max(1e-300);
        if !(lhs >= rhs - slack) {
            self.push(hypothesis, lhs, rhs);
        }
    }

    fn gt(&mut self, hypothesis: &str, lhs: f64, rhs: f64) {
        if !(lhs > rhs) {
            self.push(hypothesis, lhs, rhs);
        }
    }

    fn lt(&mut self, hypothesis: &str, lhs: f64, rhs: f64) {
        if !(lhs < rhs) {
            self.push(hypothesis, lhs, rhs);
        }
    }

    fn eq(&mut self, hypothesis: &str, lhs: f64, rhs: f64) {
        let scale = lhs.abs().max(rhs.abs()).max(1.0);
        if !((lhs - rhs).abs() <= 1e-12 * scale) {
            self.push(hypothesis, lhs, rhs);
        }
    }

    fn within(&mut self, name: &str, value: f64, lo: f64, hi: f64) {
        if !(value >= lo - BOUNDARY_TOL * lo.abs() && value <= hi + BOUNDARY_TOL * hi.abs()) {
            let rhs = if value < lo { lo } else { hi };
            self.push(&format!("{name} ∈ [{lo}, {hi}]"), value, rhs);
        }
    }

    fn condition(&mut self, mu: f64, lipschitz: f64) {
        self.gt("μ > 0", mu, 0.0);
        self.lt("μ < L", mu, lipschitz);
    }
}

/// Objects whose theorem hypotheses can be audited.
pub trait Constrained {
    fn violations(&self, regime: Regime) -> Vec<Violation>;
}

/// Every violated hypothesis of the theorem targeted by `regime`; empty iff all hold.
pub fn check_constraints<P: Constrained + ?Sized>(params: &P, regime: Regime) -> Vec<Violation> {
    params.violations(regime)
}

fn into_result<P: Constrained>(params: P, regime: Regime) -> Result<P> {
    let v = params.violations(regime);
    if v.is_empty() {
        Ok(params)
    } else {
        Err(Error::Constraints(v))
    }
}

fn sqrt1p(omega: f64) -> f64 {
    (1.0 + omega).sqrt()
}

/// Largest damping admitted by the discrete SC/QG theorems (`gamma = 1` for the proximal method).
pub fn alpha_max(regime: Regime, mu: f64, gamma: f64, omega: f64) -> f64 {
    let r = sqrt1p(omega);
    match regime {
        Regime::StronglyConvex => (2.0 + omega) * (mu * gamma / (1.0 + omega)).sqrt(),
        Regime::QuadraticGrowth => (2.0 + omega + r) / (1.0 + omega + r) * (mu * gamma).sqrt(),
        Regime::PolyakLojasiewicz => f64::NAN,
    }
}

/// Energy shift `ξ` paired with `α` in the SC/QG proofs.
fn xi_for(regime: Regime, alpha: f64, omega: f64) -> f64 {
    let r = sqrt1p(omega);
    match regime {
        Regime::StronglyConvex => (1.0 + omega) / (2.0 + omega) * alpha,
        Regime::QuadraticGrowth => (1.0 + omega + r) / (2.0 + omega + r) * alpha,
        Regime::PolyakLojasiewicz => 0.0,
    }
}

/// `γ` and `αh` prescribed for the PL regime at condition ratio `q`.
pub fn pl_gamma_alpha_h(q: f64) -> (f64, f64) {
    let s = (2.0 * q - q * q).sqrt();
    ((s - q) / (1.0 - q), 2.0 * q / (1.0 + s))
}

/// Parameters of the accelerated gradient method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AgmParams {
    regime: Regime,
    mu: f64,
    lipschitz: f64,
    q: f64,
    alpha: f64,
    gamma: f64,
    omega: f64,
    h: f64,
    xi: f64,
    eta: f64,
    theta: f64,
    a: f64,
    rho: f64,
    r_omega: f64,
    v0_coeff: f64,
    bound_prefactor: f64,
}

impl AgmParams {
    pub fn regime(&self) -> Regime {
        self.regime
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
    pub fn q(&self) -> f64 {
        self.q
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn xi(&self) -> f64 {
        self.xi
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    /// Contraction generator `A`.
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn r_omega(&self) -> f64 {
        self.r_omega
    }
    pub fn v0_coeff(&self) -> f64 {
        self.v0_coeff
    }
    /// Numerator of the gap bound: `2+ω` (SC), `2` (QG), `1` (PL).
    pub fn bound_prefactor(&self) -> f64 {
        self.bound_prefactor
    }

    /// `prefactor / (R_ω (1+ρ)^k)`, the certified multiple of `f(x₀) − f*` at step `k`.
    pub fn gap_bound_factor(&self, k: usize) -> f64 {
        self.bound_prefactor / (self.r_omega * (1.0 + self.rho).powi(k as i32))
    }
}

/// Builds an AGM bundle without validating it. `alpha` defaults to the
/// theorem's maximum (SC/QG) or the prescribed `αh/h` (PL); `gamma` is ignored
/// for PL unless given.
pub fn agm_params_unchecked(
    regime: Regime,
    mu: f64,
    lipschitz: f64,
    gamma: Option<f64>,
    omega: f64,
    alpha: Option<f64>,
) -> AgmParams {
    let h = 1.0 / lipschitz.sqrt();
    let q = mu / lipschitz;
    let (gamma, alpha, omega) = match regime {
        Regime::PolyakLojasiewicz => {
            let (g, ah) = pl_gamma_alpha_h(q);
            (gamma.unwrap_or(g), alpha.unwrap_or(ah / h), omega)
        }
        _ => {
            let g = gamma.unwrap_or(1.0);
            (g, alpha.unwrap_or_else(|| alpha_max(regime, mu, g, omega)), omega)
        }
    };
    let xi = xi_for(regime, alpha, omega);
    let ah = alpha * h;
    let denom = (1.0 + ah) * (1.0 + (1.0 + omega) * xi * h);
    let eta = omega * (alpha - xi) * xi / denom;
    let theta = gamma - omega * (alpha - xi) * h * (1.0 + (gamma + 1.0) * xi * h) / denom;
    let a = (1.0 + omega) * (alpha - xi) / (1.0 + (1.0 + omega) * xi * h);
    let r = sqrt1p(omega);
    let (rho, r_omega, v0_coeff, bound_prefactor) = match regime {
        Regime::StronglyConvex => (
            (1.0 + omega) * ah / ((2.0 + omega) + (1.0 + omega).powi(2) * ah),
            1.0 - (2.0 * omega / ((1.0 + omega) * (2.0 + omega))) * ((2.0 + omega) + ah) / (1.0 + ah),
            (2.0 + omega) / (2.0 + omega + (1.0 + omega) * ah),
            2.0 + omega,
        ),
        Regime::QuadraticGrowth => (
            (1.0 + omega) * ah / ((2.0 + omega + r) + (1.0 + omega + r) * (1.0 + omega) * ah),
            1.0 - omega / (1.0 + omega + r),
            (2.0 + omega + r) / (2.0 + omega + r + (1.0 + omega + r) * ah),
            2.0,
        ),
        Regime::PolyakLojasiewicz => (ah, 1.0, 1.0, 1.0),
    };
    AgmParams {
        regime,
        mu,
        lipschitz,
        q,
        alpha,
        gamma,
        omega,
        h,
        xi,
        eta,
        theta,
        a,
        rho,
        r_omega,
        v0_coeff,
        bound_prefactor,
    }
}

/// Validated AGM bundle for `regime`, with optional `α` override.
pub fn agm_params(
    regime: Regime,
    mu: f64,
    lipschitz: f64,
    gamma: Option<f64>,
    omega: f64,
    alpha: Option<f64>,
) -> Result<AgmParams> {
    into_result(agm_params_unchecked(regime, mu, lipschitz, gamma, omega, alpha), regime)
}

pub fn agm_params_sc(mu: f64, lipschitz: f64, gamma: f64, omega: f64) -> Result<AgmParams> {
    agm_params(Regime::StronglyConvex, mu, lipschitz, Some(gamma), omega, None)
}

pub fn agm_params_qg(mu: f64, lipschitz: f64, gamma: f64, omega: f64) -> Result<AgmParams> {
    agm_params(Regime::QuadraticGrowth, mu, lipschitz, Some(gamma), omega, None)
}

pub fn agm_params_pl(mu: f64, lipschitz: f64) -> Result<AgmParams> {
    agm_params(Regime::PolyakLojasiewicz, mu, lipschitz, None, 0.0, None)
}

impl Constrained for AgmParams {
    fn violations(&self, regime: Regime) -> Vec<Violation> {
        let mut c = Checker::default();
        let p = self;
        c.condition(p.mu, p.lipschitz);
        c.eq("h = 1/√L", p.h, 1.0 / p.lipschitz.sqrt());
        c.gt("α > 0", p.alpha, 0.0);
        let ah = p.alpha * p.h;
        match regime {
            Regime::StronglyConvex | Regime::QuadraticGrowth => {
                c.within("γ", p.gamma, 1.0, 2.0);
                c.within("ω", p.omega, 0.0, 1.0);
                let amax = alpha_max(regime, p.mu, p.gamma, p.omega);
                c.le("α ≤ α_max", p.alpha, amax);
                c.ge("ξ ≥ (1+ω)/(2+ω)·α", p.xi, (1.0 + p.omega) / (2.0 + p.omega) * p.alpha);
                c.le("ξ ≤ α", p.xi, p.alpha);
                c.ge("μγ ≥ ξ(α−ξ)", p.mu * p.gamma, p.xi * (p.alpha - p.xi));
                let expected = agm_params_unchecked(
                    regime,
                    p.mu,
                    p.lipschitz,
                    Some(p.gamma),
                    p.omega,
                    Some(p.alpha),
                );
                c.eq("ξ matches the theorem's choice", p.xi, expected.xi);
                c.eq("v₀ coefficient = 1/(1+ξh)", p.v0_coeff, 1.0 / (1.0 + p.xi * p.h));
                c.eq("ρ matches the closed form", p.rho, expected.rho);
                c.eq("R_ω matches the closed form", p.r_omega, expected.r_omega);
            }
            Regime::PolyakLojasiewicz => {
                c.eq("ω = 0", p.omega, 0.0);
                c.eq("ξ = 0", p.xi, 0.0);
                c.gt("γ > 0", p.gamma, 0.0);
                c.lt("γ < 2", p.gamma, 2.0);
                let q = p.q;
                let cap = p.gamma * (2.0 - p.gamma) * q / ((1.0 - q) * p.gamma + q);
                c.le("αh ≤ γ(2−γ)q/((1−q)γ+q)", ah, cap);
                c.eq("v₀ coefficient = 1", p.v0_coeff, 1.0);
                c.eq("ρ = αh", p.rho, ah);
            }
        }
        let denom = (1.0 + ah) * (1.0 + (1.0 + p.omega) * p.xi * p.h);
        c.eq("η = ω(α−ξ)ξ/((1+αh)[1+(1+ω)ξh])", p.eta, p.omega * (p.alpha - p.xi) * p.xi / denom);
        c.eq(
            "θ = γ − ω(α−ξ)h[1+(γ+1)ξh]/((1+αh)[1+(1+ω)ξh])",
            p.theta,
            p.gamma - p.omega * (p.alpha - p.xi) * p.h * (1.0 + (p.gamma + 1.0) * p.xi * p.h) / denom,
        );
        c.gt("ρ > 0", p.rho, 0.0);
        c.gt("R_ω > 0", p.r_omega, 0.0);
        c.0
    }
}

/// Parameters of the inertial proximal gradient method.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PgmParams {
    regime: Regime,
    mu: f64,
    lipschitz: f64,
    q: f64,
    alpha: f64,
    omega: f64,
    h: f64,
    xi: f64,
    eta: f64,
    theta: f64,
    a: f64,
    rho: f64,
    r_omega: f64,
    bound_prefactor: f64,
}

impl PgmParams {
    pub fn regime(&self) -> Regime {
        self.regime
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }
    pub fn q(&self) -> f64 {
        self.q
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    /// Prox step `s = h²`.
    pub fn step(&self) -> f64 {
        self.h * self.h
    }
    pub fn xi(&self) -> f64 {
        self.xi
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    /// Gap-to-energy factor. For QG this is `1/√(1+ω)`.
    pub fn r_omega(&self) -> f64 {
        self.r_omega
    }
    /// `2+ω` (SC) or `2` (QG).
    pub fn bound_prefactor(&self) -> f64 {
        self.bound_prefactor
    }

    pub fn gap_bound_factor(&self, k: usize) -> f64 {
        self.bound_prefactor / (self.r_omega * (1.0 + self.rho).powi(k as i32))
    }
}

/// Builds a PGM bundle without validating it; `alpha` defaults to the theorem's maximum.
pub fn pgm_params_unchecked(
    regime: Regime,
    mu: f64,
    lipschitz: f64,
    omega: f64,
    alpha: Option<f64>,
) -> PgmParams {
    let h = 1.0 / lipschitz.sqrt();
    let q = mu / lipschitz;
    let alpha = alpha.unwrap_or_else(|| alpha_max(regime, mu, 1.0, omega));
    let xi = xi_for(regime, alpha, omega);
    let ah = alpha * h;
    let eta = omega * xi * (alpha - xi) / (1.0 + (1.0 + omega) * xi * h);
    let theta = (1.0 + (alpha - xi) * h) * (1.0 + xi * h + omega * (alpha - xi) * h);
    let a = (1.0 + omega) * (alpha - xi) * (1.0 - omega * xi * h / (1.0 + (1.0 + omega) * xi * h));
    let r = sqrt1p(omega);
    let (rho, r_omega, bound_prefactor) = match regime {
        Regime::StronglyConvex => (
            (1.0 + omega) * ah / ((2.0 + omega) + omega * (1.0 + omega) * ah),
            ((1.0 - omega) + (1.0 + omega) * ah) / (1.0 + (1.0 + omega) * ah),
            2.0 + omega,
        ),
        Regime::QuadraticGrowth => (
            (1.0 + omega) * ah / ((2.0 + omega + r) + omega * (1.0 + omega + r) * ah),
            1.0 / r,
            2.0,
        ),
        Regime::PolyakLojasiewicz => (f64::NAN, f64::NAN, f64::NAN),
    };
    PgmParams {
        regime,
        mu,
        lipschitz,
        q,
        alpha,
        omega,
        h,
        xi,
        eta,
        theta,
        a,
        rho,
        r_omega,
        bound_prefactor,
    }
}

/// Validated PGM bundle. There is no PL theorem for the proximal method.
pub fn pgm_params(regime: Regime, mu: f64, lipschitz: f64, omega: f64, alpha: Option<f64>) -> Result<PgmParams> {
    if regime == Regime::PolyakLojasiewicz {
        return Err(Error::Undefined("the proximal method has no PL-regime guarantee".into()));
    }
    into_result(pgm_params_unchecked(regime, mu, lipschitz, omega, alpha), regime)
}

pub fn pgm_params_sc(mu: f64, lipschitz: f64, omega: f64) -> Result<PgmParams> {
    pgm_params(Regime::StronglyConvex, mu, lipschitz, omega, None)
}

pub fn pgm_params_qg(mu: f64, lipschitz: f64, omega: f64) -> Result<PgmParams> {
    pgm_params(Regime::QuadraticGrowth, mu, lipschitz, omega, None)
}

impl Constrained for PgmParams {
    fn violations(&self, regime: Regime) -> Vec<Violation> {
        let mut c = Checker::default();
        let p = self;
        if regime == Regime::PolyakLojasiewicz {
            c.push("a PL-regime theorem for the proximal method", f64::NAN, f64::NAN);
            return c.0;
        }
        c.condition(p.mu, p.lipschitz);
        c.eq("h = 1/√L", p.h, 1.0 / p.lipschitz.sqrt());
        c.within("ω", p.omega, 0.0, 1.0);
        c.gt("α > 0", p.alpha, 0.0);
        c.le("α ≤ α_max", p.alpha, alpha_max(regime, p.mu, 1.0, p.omega));
        c.ge("ξ ≥ 0", p.xi, 0.0);
        c.le("ξ ≤ α", p.xi, p.alpha);
        let expected = pgm_params_unchecked(regime, p.mu, p.lipschitz, p.omega, Some(p.alpha));
        c.eq("ξ matches the theorem's choice", p.xi, expected.xi);
        match regime {
            Regime::StronglyConvex => {
                c.ge("μ ≥ ξ(α−ξ)", p.mu, p.xi * (p.alpha - p.xi));
            }
            _ => {
                let r = sqrt1p(p.omega);
                c.ge("μ ≥ (1+ω+√(1+ω))ξ(α−ξ)", p.mu, (1.0 + p.omega + r) * p.xi * (p.alpha - p.xi));
            }
        }
        let xh = p.xi * p.h;
        c.eq(
            "η = ωξ(α−ξ)/(1+(1+ω)ξh)",
            p.eta,
            p.omega * p.xi * (p.alpha - p.xi) / (1.0 + (1.0 + p.omega) * xh),
        );
        c.eq(
            "θ = [1+(α−ξ)h][1+ξh+ω(α−ξ)h]",
            p.theta,
            (1.0 + (p.alpha - p.xi) * p.h) * (1.0 + xh + p.omega * (p.alpha - p.xi) * p.h),
        );
        c.eq("ρ matches the closed form", p.rho, expected.rho);
        c.eq("R_ω matches the closed form", p.r_omega, expected.r_omega);
        c.le("ρ ≤ Ah", p.rho, p.a * p.h);
        c.gt("ρ > 0", p.rho, 0.0);
        c.gt("R_ω > 0", p.r_omega, 0.0);
        c.0
    }
}

/// Parameters of the continuous dynamics.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OdeParams {
    regime: Regime,
    mu: f64,
    alpha: f64,
    beta: f64,
    gamma: f64,
    theta: f64,
    omega: f64,
    xi: f64,
    eta: f64,
    decay_rate: f64,
    prefactor: f64,
}

impl OdeParams {
    pub fn regime(&self) -> Regime {
        self.regime
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn beta(&self) -> f64 {
        self.beta
    }
    pub fn gamma(&self) -> f64 {
        self.gamma
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn omega(&self) -> f64 {
        self.omega
    }
    pub fn xi(&self) -> f64 {
        self.xi
    }
    pub fn eta(&self) -> f64 {
        self.eta
    }
    /// Exponent of the energy (and gap) envelope.
    pub fn decay_rate(&self) -> f64 {
        self.decay_rate
    }
    /// Constant in front of `f(x₀) − f*` in the gap envelope.
    pub fn prefactor(&self) -> f64 {
        self.prefactor
    }

    pub fn envelope(&self, gap0: f64, t: f64) -> f64 {
        self.prefactor * gap0 * (-self.decay_rate * t).exp()
    }
}

/// Lower bound on `θ` imposed by the SC/QG dynamics theorems (without the `ω/2` floor).
pub fn ode_theta_lower_bound(regime: Regime, mu: f64, alpha: f64, beta: f64, omega: f64) -> f64 {
    let r = sqrt1p(omega);
    let ab = alpha * beta;
    match regime {
        Regime::StronglyConvex => {
            (1.0 + omega) / (2.0 + omega).powi(2) * (alpha * alpha / mu) * (1.0 + omega * ab / (2.0 + omega))
        }
        Regime::QuadraticGrowth => {
            ((1.0 + omega + r) / (2.0 + omega + r)).powi(2)
                * (alpha * alpha / mu)
                * (1.0 + omega * ab / (r * (2.0 + omega + r)))
        }
        Regime::PolyakLojasiewicz => 0.0,
    }
}

/// Default damping for the dynamics: the value making the SC/QG `θ` bound equal one at `β = 0`,
/// and `μβ` for PL.
pub fn ode_default_alpha(regime: Regime, mu: f64, beta: f64, omega: f64) -> f64 {
    let r = sqrt1p(omega);
    match regime {
        Regime::StronglyConvex => (2.0 + omega) * (mu / (1.0 + omega)).sqrt(),
        Regime::QuadraticGrowth => (2.0 + omega + r) / (1.0 + omega + r) * mu.sqrt(),
        Regime::PolyakLojasiewicz => mu * beta,
    }
}

/// Builds an ODE bundle without validating it. `theta` defaults to
/// `max(lower bound, ω/2)` (SC/QG) or 1 (PL).
pub fn ode_params_unchecked(
    regime: Regime,
    mu: f64,
    alpha: f64,
    beta: f64,
    omega: f64,
    theta: Option<f64>,
) -> OdeParams {
    let r = sqrt1p(omega);
    let ab = alpha * beta;
    let theta = theta.unwrap_or_else(|| match regime {
        Regime::PolyakLojasiewicz => 1.0,
        _ => ode_theta_lower_bound(regime, mu, alpha, beta, omega).max(omega / 2.0),
    });
    let (xi, gamma, decay_rate, prefactor) = match regime {
        Regime::StronglyConvex => {
            let w = omega * ab / (2.0 + omega);
            (
                (1.0 + omega) / (2.0 + omega) * alpha,
                theta + ab / (2.0 + omega),
                (1.0 + omega) / (2.0 + omega) * alpha,
                (2.0 + w) / ((1.0 - omega) + w),
            )
        }
        Regime::QuadraticGrowth => (
            (1.0 + omega + r) / (2.0 + omega + r) * alpha,
            theta + ab / (2.0 + omega + r),
            (1.0 + omega) / (2.0 + omega + r) * alpha,
            1.0 + r,
        ),
        Regime::PolyakLojasiewicz => (0.0, theta + ab, 2.0 * mu * beta, 1.0),
    };
    OdeParams {
        regime,
        mu,
        alpha,
        beta,
        gamma,
        theta,
        omega,
        xi,
        eta: omega * xi * (alpha - xi),
        decay_rate,
        prefactor,
    }
}

/// Validated ODE bundle.
pub fn ode_params(
    regime: Regime,
    mu: f64,
    alpha: f64,
    beta: f64,
    omega: f64,
    theta: Option<f64>,
) -> Result<OdeParams> {
    into_result(ode_params_unchecked(regime, mu, alpha, beta, omega, theta), regime)
}

pub fn ode_params_sc(mu: f64, alpha: f64, beta: f64, omega: f64, theta: Option<f64>) -> Result<OdeParams> {
    ode_params(Regime::StronglyConvex, mu, alpha, beta, omega, theta)
}

pub fn ode_params_qg(mu: f64, alpha: f64, beta: f64, omega: f64, theta: Option<f64>) -> Result<OdeParams> {
    ode_params(Regime::QuadraticGrowth, mu, alpha, beta, omega, theta)
}

/// PL bundle with `α = μβ`.
pub fn ode_params_pl(mu: f64, beta: f64, theta: f64) -> Result<OdeParams> {
    ode_params(Regime::PolyakLojasiewicz, mu, mu * beta, beta, 0.0, Some(theta))
}

impl Constrained for OdeParams {
    fn violations(&self, regime: Regime) -> Vec<Violation> {
        let mut c = Checker::default();
        let p = self;
        c.gt("μ > 0", p.mu, 0.0);
        c.gt("β > 0", p.beta, 0.0);
        c.gt("θ > 0", p.theta, 0.0);
        c.within("ω", p.omega, 0.0, 1.0);
        c.ge("ξ ≥ 0", p.xi, 0.0);
        c.le("ξ ≤ α", p.xi, p.alpha);
        c.eq("η = ωξ(α−ξ)", p.eta, p.omega * p.xi * (p.alpha - p.xi));
        c.eq("γ = θ + (α−ξ)β", p.gamma, p.theta + (p.alpha - p.xi) * p.beta);
        let expected = ode_params_unchecked(regime, p.mu, p.alpha, p.beta, p.omega, Some(p.theta));
        match regime {
            Regime::StronglyConvex | Regime::QuadraticGrowth => {
                c.gt("α > 0", p.alpha, 0.0);
                c.ge("θ ≥ ω/2", p.theta, p.omega / 2.0);
                let lb = ode_theta_lower_bound(regime, p.mu, p.alpha, p.beta, p.omega);
                let name = if regime == Regime::StronglyConvex {
                    "θ ≥ (1+ω)/(2+ω)²·(α²/μ)·(1+ωαβ/(2+ω))"
                } else {
                    "θ ≥ ((1+ω+r)/(2+ω+r))²·(α²/μ)·(1+ωαβ/(r(2+ω+r)))"
                };
                c.ge(name, p.theta, lb);
                c.eq("ξ matches the theorem's choice", p.xi, expected.xi);
            }
            Regime::PolyakLojasiewicz => {
                c.eq("ω = 0", p.omega, 0.0);
                c.eq("ξ = 0", p.xi, 0.0);
                c.ge("α ≥ μβ", p.alpha, p.mu * p.beta);
            }
        }
        c.eq("decay rate matches the theorem", p.decay_rate, expected.decay_rate);
        c.eq("prefactor matches the theorem", p.prefactor, expected.prefactor);
        c.gt("prefactor > 0", p.prefactor, 0.0);
        c.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, rel: f64) -> bool {
        (a - b).abs() <= rel * b.abs().max(1e-300)
    }

    #[test]
    fn agm_sc_omega0_matches_corollary() {
        let p = agm_params_sc(1.0, 100.0, 1.0, 0.0).unwrap();
        assert!(close(p.alpha(), 2.0, 1e-15));
        assert!(close(p.h(), 0.1, 1e-15));
        assert!(close(p.rho(), 0.1 / 1.1, 1e-14));
        assert_eq!(p.eta(), 0.0);
        assert_eq!(p.theta(), p.gamma());
        assert!(close(p.v0_coeff(), 2.0 / 2.2, 1e-15));
        assert!(close(p.v0_coeff(), 1.0 / (1.0 + p.xi() * p.h()), 1e-15));
    }

    #[test]
    fn agm_sc_omega1_matches_corollary() {
        let p = agm_params_sc(1.0, 100.0, 2.0, 1.0).unwrap();
        let s = (2.0 * 2.0 * 0.01_f64).sqrt();
        assert!(close(p.rho(), s / (1.0 + 2.0 * s), 1e-14));
        assert!(close(p.rho(), 0.2 / 1.4, 1e-14));
    }

    #[test]
    fn agm_sc_rho_equals_ah() {
        for &omega in &[0.0, 0.3, 1.0] {
            for &gamma in &[1.0, 1.7, 2.0] {
                let p = agm_params_sc(0.02, 3.0, gamma, omega).unwrap();
                assert!(close(p.rho(), p.a() * p.h(), 1e-13));
            }
        }
    }

    #[test]
    fn agm_qg_corollaries() {
        let p = agm_params_qg(1.0, 100.0, 1.0, 0.0).unwrap();
        assert!(close(p.alpha(), 1.5, 1e-15));
        assert!(close(p.rho(), 0.05 / 1.1, 1e-14));
        assert_eq!(p.r_omega(), 1.0);
        let p = agm_params_qg(1.0, 100.0, 1.0, 1.0).unwrap();
        assert!(close(p.alpha(), 2.0 - 2f64.sqrt() / 2.0, 1e-14));
        // ω=1 corollary form of ρ
        let s = 0.1;
        assert!(close(p.rho(), (2.0 - 2f64.sqrt()) * s / (1.0 + 2.0 * s), 1e-13));
    }

    #[test]
    fn agm_pl_values() {
        let p = agm_params_pl(0.01, 1.0).unwrap();
        assert!(close(p.gamma(), (0.0199f64.sqrt() - 0.01) / 0.99, 1e-14));
        assert!((p.gamma() - 0.1323913).abs() < 1e-7);
        assert!((p.alpha() * p.h() - 0.0175274).abs() < 1e-7);
        assert_eq!(p.rho(), p.alpha() * p.h());
        assert_eq!(p.v0_coeff(), 1.0);
        assert_eq!(p.xi(), 0.0);
        assert_eq!(p.eta(), 0.0);
        assert_eq!(p.theta(), p.gamma());
    }

    #[test]
    fn agm_pl_small_q_rate_near_2q() {
        let q = 1e-8;
        let p = agm_params_pl(q, 1.0).unwrap();
        assert!(close(p.rho(), 2.0 * q, 1e-3));
    }

    #[test]
    fn agm_pl_gamma_in_unit_interval() {
        for i in 1..1000 {
            let q = i as f64 / 1000.0;
            let (g, ah) = pl_gamma_alpha_h(q);
            assert!(g > 0.0 && g < 1.0, "q = {q}, γ = {g}");
            let cap = g * (2.0 - g) * q / ((1.0 - q) * g + q);
            assert!(close(ah, cap, 1e-10), "q = {q}");
        }
    }

    #[test]
    fn agm_rejects_out_of_range() {
        assert!(matches!(agm_params_sc(100.0, 100.0, 1.0, 0.0), Err(Error::Constraints(_))));
        let err = agm_params_sc(1.0, 100.0, 3.0, 0.0).unwrap_err();
        match err {
            Error::Constraints(v) => assert!(v.iter().any(|x| x.hypothesis.starts_with("γ ∈ [1, 2]"))),
            other => panic!("unexpected {other:?}"),
        }
        assert!(agm_params_pl(2.0, 1.0).is_err());
    }

    #[test]
    fn manual_gamma_override_is_flagged() {
        let p = agm_params_unchecked(Regime::StronglyConvex, 1.0, 100.0, Some(3.0), 0.0, None);
        let v = check_constraints(&p, Regime::StronglyConvex);
        assert!(v.iter().any(|x| x.hypothesis.starts_with("γ ∈ [1, 2]")));
    }

    #[test]
    fn agm_alpha_override_above_max_is_flagged() {
        let r = agm_params(Regime::StronglyConvex, 1.0, 100.0, Some(1.0), 0.0, Some(2.5));
        match r {
            Err(Error::Constraints(v)) => assert!(v.iter().any(|x| x.hypothesis == "α ≤ α_max")),
            other => panic!("unexpected {other:?}"),
        }
        assert!(agm_params(Regime::StronglyConvex, 1.0, 100.0, Some(1.0), 0.0, Some(1.5)).is_ok());
    }

    #[test]
    fn pgm_sc_corollaries() {
        let p = pgm_params_sc(1.0, 100.0, 0.0).unwrap();
        assert!(close(p.alpha(), 2.0, 1e-15));
        assert!(close(p.rho(), 0.1, 1e-14));
        assert_eq!(p.eta(), 0.0);
        let (ah, xh) = ((p.alpha() - p.xi()) * p.h(), p.xi() * p.h());
        assert!(close(p.theta(), (1.0 + ah) * (1.0 + xh), 1e-15));

        let p = pgm_params_sc(1.0, 100.0, 1.0).unwrap();
        assert!(close(p.alpha(), 1.5 * 2f64.sqrt(), 1e-15));
        let s = (0.02f64).sqrt();
        assert!(close(p.rho(), s / (1.0 + s), 1e-14));
        // corollary prefactor (2+ω)/R_ω = 3 + 1/√(2q)
        assert!(close(p.gap_bound_factor(0), 3.0 + 1.0 / s, 1e-13));
    }

    #[test]
    fn pgm_qg_corollaries() {
        let q: f64 = 0.01;
        let p = pgm_params_qg(1.0, 100.0, 0.0).unwrap();
        assert!(close(p.alpha(), 1.5, 1e-15));
        assert!(close(p.rho(), 0.5 * q.sqrt(), 1e-14));
        assert!(close(p.gap_bound_factor(0), 2.0, 1e-15));
        let p = pgm_params_qg(1.0, 100.0, 1.0).unwrap();
        assert!(close(p.rho(), (2.0 - 2f64.sqrt()) * q.sqrt() / (1.0 + q.sqrt()), 1e-13));
        assert!(close(p.gap_bound_factor(0), 2.0 * 2f64.sqrt(), 1e-15));
    }

    #[test]
    fn pgm_near_boundary_still_accepted() {
        assert!(pgm_params_qg(1.0 - 1e-9, 1.0, 0.5).is_ok());
        assert!(pgm_params_qg(1.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn pgm_pl_is_refused() {
        assert!(matches!(
            pgm_params(Regime::PolyakLojasiewicz, 0.1, 1.0, 0.0, None),
            Err(Error::Undefined(_))
        ));
    }

    #[test]
    fn ode_sc_remarks() {
        let mu: f64 = 0.04;
        let beta = 0.7;
        let p = ode_params_sc(mu, 2.0 * mu.sqrt(), beta, 0.0, Some(1.0)).unwrap();
        assert!(close(p.gamma(), 1.0 + mu.sqrt() * beta, 1e-14));
        assert!(close(p.decay_rate(), mu.sqrt(), 1e-14));
        assert!(close(p.prefactor(), 2.0, 1e-15));

        let p = ode_params_sc(mu, 2.0 * (2.0 * mu).sqrt(), beta, 0.0, Some(2.0)).unwrap();
        assert!(close(p.decay_rate(), (2.0 * mu).sqrt(), 1e-14));

        let theta = 2.0 * (1.0 + mu.sqrt() * beta);
        let p = ode_params_sc(mu, 3.0 * mu.sqrt(), beta, 1.0, Some(theta)).unwrap();
        assert!(close(p.decay_rate(), 2.0 * mu.sqrt(), 1e-14));
        assert!(close(p.gamma(), 2.0 + 3.0 * mu.sqrt() * beta, 1e-14));
        assert!(close(p.prefactor(), 1.0 + 6.0 / (p.alpha() * beta), 1e-14));
    }

    #[test]
    fn ode_qg_remarks() {
        let mu: f64 = 0.09;
        let p = ode_params_qg(mu, 1.5 * mu.sqrt(), 0.3, 0.0, Some(1.0)).unwrap();
        assert!(close(p.decay_rate(), 0.5 * mu.sqrt(), 1e-14));
        assert_eq!(p.prefactor(), 2.0);
        let p = ode_params_qg(mu, (2.0 - 2f64.sqrt() / 2.0) * mu.sqrt(), 0.3, 1.0, None).unwrap();
        assert!(close(p.decay_rate(), (2.0 - 2f64.sqrt()) * mu.sqrt(), 1e-14));
    }

    #[test]
    fn ode_pl_values() {
        let p = ode_params_pl(1.0, 1.0, 1.0).unwrap();
        assert_eq!(p.gamma(), 2.0);
        assert_eq!(p.decay_rate(), 2.0);
        assert_eq!(p.prefactor(), 1.0);
        let q = ode_params_pl(1.0, 2.0, 1.0).unwrap();
        assert_eq!(q.decay_rate(), 2.0 * p.decay_rate());
        assert!(ode_params_pl(1.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn ode_theta_below_bound_is_named() {
        let mu = 0.04;
        let err = ode_params_sc(mu, 2.0 * 0.2, 0.5, 0.0, Some(0.5)).unwrap_err();
        match err {
            Error::Constraints(v) => assert!(v.iter().any(|x| x.hypothesis.starts_with("θ ≥ (1+ω)/(2+ω)²"))),
            other => panic!("unexpected {other:?}"),
        }
        let err = ode_params_sc(mu, 0.01, 0.5, 1.0, Some(0.1)).unwrap_err();
        match err {
            Error::Constraints(v) => assert!(v.iter().any(|x| x.hypothesis == "θ ≥ ω/2")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ode_default_theta_is_feasible() {
        for &omega in &[0.0, 0.5, 1.0] {
            for regime in [Regime::StronglyConvex, Regime::QuadraticGrowth] {
                let alpha = ode_default_alpha(regime, 0.01, 0.1, omega);
                assert!(ode_params(regime, 0.01, alpha, 0.1, omega, None).is_ok());
            }
        }
    }

    #[test]
    fn regime_parsing() {
        assert_eq!("SC".parse::<Regime>().unwrap(), Regime::StronglyConvex);
        assert_eq!("quadratic_growth".parse::<Regime>().unwrap(), Regime::QuadraticGrowth);
        assert!("xx".parse::<Regime>().is_err());
    }

    #[test]
    fn violation_display_names_both_sides() {
        let v = Violation { hypothesis: "γ ∈ [1, 2]".into(), lhs: 3.0, rhs: 2.0 };
        let s = v.to_string();
        assert!(s.contains("γ ∈ [1, 2]") && s.contains("3.0") && s.contains("2.0"));
    }
}
