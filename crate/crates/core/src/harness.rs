//! Experiment configuration, execution, rate fitting and rate tables.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::agm::agm_run;
use crate::error::{Error, Result};
use crate::ode::ode_run;
use crate::oracle::{
    conditioned_design, geometric_spectrum, lasso_problem, pl_sine_problem, quadratic_problem, sample_box,
    CompositeObjective, Point, ProxTerm, SmoothObjective,
};
use crate::params::{agm_params, check_constraints, ode_default_alpha, ode_params, pgm_params, Regime};
use crate::pgm::pgm_run;
use crate::trace::{Solver, Trace};

/// Environment variable naming the default output directory.
pub const OUT_DIR_ENV: &str = "INERTIAL_OUT_DIR";

/// Output directory used when neither the config nor the environment names one.
pub const DEFAULT_OUT_DIR: &str = "out";

/// Relative gap used for iterations-to-threshold.
pub const ITERS_TOL: f64 = 1e-9;

/// Minimum fraction of zero coordinates in generated lasso minimizers.
pub const LASSO_MIN_ZERO_FRACTION: f64 = 0.25;

/// Default tail fraction used by [`fit_linear_rate`].
pub const DEFAULT_FIT_WINDOW: f64 = 0.5;

/// Fraction of the leading records always excluded from fits.
pub const TRANSIENT_FRACTION: f64 = 0.1;

/// Minimum number of points for a rate fit.
pub const MIN_FIT_POINTS: usize = 20;

/// Result of a log-linear fit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum RateFit {
    Rate(f64),
    Indeterminate { points: usize },
}

impl RateFit {
    pub fn rate(self) -> Option<f64> {
        match self {
            RateFit::Rate(r) => Some(r),
            RateFit::Indeterminate { .. } => None,
        }
    }
}

/// Relative gap below which records are treated as noise by [`fit_linear_rate`].
pub const GAP_FLOOR: f64 = 1e-13;

/// Least-squares slope of `ln gap_k` against `k` over the tail `window` of the
/// records preceding the first gap below `1e−13·gap₀` (and never inside the first
/// 10%); returns `ρ` with `1+ρ = e^{−slope}`.
pub fn fit_linear_rate(gaps: &[f64], window: f64) -> RateFit {
    fit_linear_rate_floor(gaps, window, GAP_FLOOR)
}

/// [`fit_linear_rate`] with the noise floor `floor_rel·gap₀` chosen by the caller.
/// A zero floor keeps every positive finite gap, which suits objectives whose gap
/// is computed without cancellation (`f* = 0`).
pub fn fit_linear_rate_floor(gaps: &[f64], window: f64, floor_rel: f64) -> RateFit {
    let Some(&gap0) = gaps.first() else {
        return RateFit::Indeterminate { points: 0 };
    };
    let floor = floor_rel * gap0;
    let end = gaps
        .iter()
        .position(|&g| !(g > 0.0 && g.is_finite()) || g < floor)
        .unwrap_or(gaps.len());
    let window = window.clamp(0.0, 1.0);
    let tail = (window * end as f64).round() as usize;
    let transient = (TRANSIENT_FRACTION * end as f64).ceil() as usize;
    let start = end.saturating_sub(tail).max(transient);
    let n = end.saturating_sub(start);
    if n < MIN_FIT_POINTS {
        return RateFit::Indeterminate { points: n };
    }
    let nf = n as f64;
    let mean_k = (start..end).map(|k| k as f64).sum::<f64>() / nf;
    let mean_l = gaps[start..end].iter().map(|g| g.ln()).sum::<f64>() / nf;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (k, g) in (start..end).zip(&gaps[start..end]) {
        let dk = k as f64 - mean_k;
        sxy += dk * (g.ln() - mean_l);
        sxx += dk * dk;
    }
    RateFit::Rate((-(sxy / sxx)).exp() - 1.0)
}

/// Built-in problem generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    Quadratic,
    PlSine,
    Lasso,
}

impl ProblemKind {
    pub fn tag(self) -> &'static str {
        match self {
            ProblemKind::Quadratic => "quadratic",
            ProblemKind::PlSine => "pl_sine",
            ProblemKind::Lasso => "lasso",
        }
    }
}

impl std::fmt::Display for ProblemKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "quadratic" => Ok(ProblemKind::Quadratic),
            "pl_sine" | "pl-sine" | "plsine" => Ok(ProblemKind::PlSine),
            "lasso" => Ok(ProblemKind::Lasso),
            other => Err(Error::Config(format!("unknown problem `{other}` (quadratic, pl_sine, lasso)"))),
        }
    }
}

pub fn parse_solver(s: &str) -> Result<Solver> {
    match s.trim().to_ascii_lowercase().as_str() {
        "agm" => Ok(Solver::Agm),
        "pgm" => Ok(Solver::Pgm),
        "ode" => Ok(Solver::Ode),
        other => Err(Error::Config(format!("unknown solver `{other}` (agm, pgm, ode)"))),
    }
}

/// One experiment. Parsed from a flat `key = value` file; every key can also be
/// set from the command line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub problem: ProblemKind,
    pub dim: usize,
    /// `μ/L` of the generated instance (quadratic and lasso).
    pub q: f64,
    pub lipschitz: f64,
    /// Random linear term for quadratics (otherwise `b = 0`).
    pub offset: bool,
    /// Lasso weight; chosen automatically when unset.
    pub lambda: Option<f64>,
    /// Fill value for the starting point; seeded box sample when unset.
    pub x0: Option<f64>,
    pub solver: Solver,
    pub regime: Regime,
    pub gamma: Option<f64>,
    pub omega: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub theta: Option<f64>,
    pub iterations: usize,
    pub horizon: Option<f64>,
    pub dt: Option<f64>,
    pub seed: u64,
    pub out_dir: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub json: Option<PathBuf>,
    pub certify: bool,
    pub gammas: Vec<f64>,
    pub omegas: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            problem: ProblemKind::Quadratic,
            dim: 50,
            q: 1e-2,
            lipschitz: 1.0,
            offset: true,
            lambda: None,
            x0: None,
            solver: Solver::Agm,
            regime: Regime::StronglyConvex,
            gamma: None,
            omega: 0.0,
            alpha: None,
            beta: None,
            theta: None,
            iterations: 1000,
            horizon: None,
            dt: None,
            seed: 1,
            out_dir: None,
            csv: None,
            json: None,
            certify: false,
            gammas: vec![1.0, 1.5, 2.0],
            omegas: vec![0.0, 0.25, 0.5, 0.75, 1.0],
        }
    }
}

/// Recognized configuration keys.
pub const CONFIG_KEYS: &[&str] = &[
    "problem", "dim", "q", "lipschitz", "offset", "lambda", "x0", "solver", "regime", "gamma", "omega", "alpha",
    "beta", "theta", "iterations", "horizon", "dt", "seed", "out_dir", "csv", "json", "certify", "gammas", "omegas",
];

fn parse_num<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| Error::Config(format!("`{key}`: cannot parse `{value}`")))
}

fn parse_opt<T: FromStr>(key: &str, value: &str) -> Result<Option<T>> {
    match value.trim() {
        "" | "none" | "auto" => Ok(None),
        v => parse_num(key, v).map(Some),
    }
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        v => Err(Error::Config(format!("`{key}`: expected a boolean, got `{v}`"))),
    }
}

fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    let items = value.split(',').map(|s| parse_num(key, s)).collect::<Result<Vec<f64>>>()?;
    if items.is_empty() {
        return Err(Error::Config(format!("`{key}` must not be empty")));
    }
    Ok(items)
}

fn parse_path(value: &str) -> Option<PathBuf> {
    let v = value.trim();
    (!v.is_empty()).then(|| PathBuf::from(v))
}

impl ExperimentConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        match key {
            "problem" => self.problem = value.parse()?,
            "dim" => self.dim = parse_num(key, value)?,
            "q" => self.q = parse_num(key, value)?,
            "lipschitz" => self.lipschitz = parse_num(key, value)?,
            "offset" => self.offset = parse_bool(key, value)?,
            "lambda" => self.lambda = parse_opt(key, value)?,
            "x0" => self.x0 = parse_opt(key, value)?,
            "solver" => self.solver = parse_solver(value)?,
            "regime" => self.regime = value.trim().parse()?,
            "gamma" => self.gamma = parse_opt(key, value)?,
            "omega" => self.omega = parse_num(key, value)?,
            "alpha" => self.alpha = parse_opt(key, value)?,
            "beta" => self.beta = parse_opt(key, value)?,
            "theta" => self.theta = parse_opt(key, value)?,
            "iterations" => self.iterations = parse_num(key, value)?,
            "horizon" => self.horizon = parse_opt(key, value)?,
            "dt" => self.dt = parse_opt(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "out_dir" => self.out_dir = parse_path(value),
            "csv" => self.csv = parse_path(value),
            "json" => self.json = parse_path(value),
            "certify" => self.certify = parse_bool(key, value)?,
            "gammas" => self.gammas = parse_list(key, value)?,
            "omegas" => self.omegas = parse_list(key, value)?,
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_kv(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
            self.set(key, value)
                .map_err(|e| Error::Config(format!("line {}: {}", n + 1, e)))?;
        }
        Ok(())
    }

    pub fn from_kv_str(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_kv(text)?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_kv_str(&std::fs::read_to_string(path)?)
    }

    /// Flat `key = value` rendering that [`ExperimentConfig::from_kv_str`] reads back.
    pub fn to_kv_string(&self) -> String {
        fn opt<T: std::fmt::Display>(v: &Option<T>) -> String {
            v.as_ref().map(|x| x.to_string()).unwrap_or_else(|| "none".into())
        }
        fn path(v: &Option<PathBuf>) -> String {
            v.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
        }
        fn list(v: &[f64]) -> String {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        }
        let pairs: Vec<(&str, String)> = vec![
            ("problem", self.problem.to_string()),
            ("dim", self.dim.to_string()),
            ("q", self.q.to_string()),
            ("lipschitz", self.lipschitz.to_string()),
            ("offset", self.offset.to_string()),
            ("lambda", opt(&self.lambda)),
            ("x0", opt(&self.x0)),
            ("solver", self.solver.to_string()),
            ("regime", self.regime.tag().to_string()),
            ("gamma", opt(&self.gamma)),
            ("omega", self.omega.to_string()),
            ("alpha", opt(&self.alpha)),
            ("beta", opt(&self.beta)),
            ("theta", opt(&self.theta)),
            ("iterations", self.iterations.to_string()),
            ("horizon", opt(&self.horizon)),
            ("dt", opt(&self.dt)),
            ("seed", self.seed.to_string()),
            ("out_dir", path(&self.out_dir)),
            ("csv", path(&self.csv)),
            ("json", path(&self.json)),
            ("certify", self.certify.to_string()),
            ("gammas", list(&self.gammas)),
            ("omegas", list(&self.omegas)),
        ];
        pairs.into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// File stem for default artifact names.
    pub fn stem(&self) -> String {
        let gamma = self.gamma.map(|g| format!("_g{g}")).unwrap_or_default();
        format!("{}_{}_{}{}_w{}_s{}", self.solver, self.problem, self.regime.tag(), gamma, self.omega, self.seed)
    }

    /// Output directory: the config value, else `$INERTIAL_OUT_DIR`, else `out`.
    pub fn resolved_out_dir(&self) -> PathBuf {
        self.out_dir
            .clone()
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR))
    }

    pub fn csv_path(&self) -> PathBuf {
        self.csv.clone().unwrap_or_else(|| self.resolved_out_dir().join(format!("{}.csv", self.stem())))
    }

    pub fn json_path(&self) -> PathBuf {
        self.json.clone().unwrap_or_else(|| self.resolved_out_dir().join(format!("{}.json", self.stem())))
    }

    /// Fields that determine the problem instance and starting point.
    fn instance_key(&self) -> String {
        format!(
            "{}|{}|{}|{}|{}|{:?}|{:?}|{}",
            self.problem, self.dim, self.q, self.lipschitz, self.offset, self.lambda, self.x0, self.seed
        )
    }
}

/// A generated objective.
#[derive(Clone)]
pub enum Problem {
    Smooth(SmoothObjective),
    Composite(CompositeObjective),
}

/// Objective plus starting point.
#[derive(Clone)]
pub struct Instance {
    pub problem: Problem,
    pub x0: Point,
    /// Lasso weight actually used.
    pub lambda: Option<f64>,
}

impl Instance {
    pub fn dim(&self) -> usize {
        self.x0.len()
    }
}

/// Validated parameters for one solver.
#[derive(Debug, Clone, PartialEq)]
pub enum Bundle {
    Agm(crate::params::AgmParams),
    Pgm(crate::params::PgmParams),
    Ode(crate::params::OdeParams),
}

impl Bundle {
    /// Certified per-iteration rate `ρ`, or the energy decay rate for the dynamics.
    pub fn rate(&self) -> f64 {
        match self {
            Bundle::Agm(p) => p.rho(),
            Bundle::Pgm(p) => p.rho(),
            Bundle::Ode(p) => p.decay_rate(),
        }
    }
}

fn zero_fraction(x: &Point) -> f64 {
    let scale = x.amax().max(1.0);
    x.iter().filter(|v| v.abs() <= 1e-12 * scale).count() as f64 / x.len() as f64
}

/// Seeded strongly convex lasso with `2·dim` rows. When `lambda` is unset it
/// starts at `10⁻³‖Aᵀb‖∞` and doubles until at least a quarter of the
/// minimizer's coordinates vanish. Returns the objective and the weight used.
pub fn lasso_instance(
    dim: usize,
    q: f64,
    lipschitz: f64,
    lambda: Option<f64>,
    seed: u64,
) -> Result<(CompositeObjective, f64)> {
    if dim < 2 {
        return Err(Error::Config("lasso needs dim ≥ 2".into()));
    }
    let rows = 2 * dim;
    let a = conditioned_design(rows, dim, q * lipschitz, lipschitz, seed);
    let coeffs = sample_box(dim, 1, 1.0, seed.wrapping_add(101)).remove(0);
    let x_true = Point::from_fn(dim, |i, _| if i % 2 == 0 { 2.0 * coeffs[i] } else { 0.0 });
    let noise = sample_box(rows, 1, 0.1, seed.wrapping_add(202)).remove(0);
    let b = &a * x_true + noise;
    if let Some(l) = lambda {
        return Ok((lasso_problem(&a, &b, l)?, l));
    }
    let lambda_max = (a.transpose() * &b).amax();
    let mut l = 1e-3 * lambda_max;
    loop {
        let obj = lasso_problem(&a, &b, l)?;
        let xstar = obj
            .minimizer()
            .ok_or_else(|| Error::NotConverged { iterations: crate::oracle::REFERENCE_MAX_ITERS, residual: f64::NAN })?;
        if zero_fraction(xstar) >= LASSO_MIN_ZERO_FRACTION || l >= lambda_max {
            return Ok((obj, l));
        }
        l = (2.0 * l).min(lambda_max);
    }
}

pub fn build_instance(cfg: &ExperimentConfig) -> Result<Instance> {
    if !(cfg.q > 0.0 && cfg.q < 1.0) {
        return Err(Error::Config(format!("q must lie in (0, 1), got {}", cfg.q)));
    }
    if !(cfg.lipschitz > 0.0 && cfg.lipschitz.is_finite()) {
        return Err(Error::Config(format!("lipschitz must be positive, got {}", cfg.lipschitz)));
    }
    if cfg.dim == 0 {
        return Err(Error::Config("dim must be positive".into()));
    }
    let (problem, lambda) = match cfg.problem {
        ProblemKind::Quadratic => {
            let spectrum = geometric_spectrum(cfg.dim, cfg.q * cfg.lipschitz, cfg.lipschitz);
            let b = if cfg.offset {
                sample_box(cfg.dim, 1, 1.0, cfg.seed.wrapping_add(303)).remove(0)
            } else {
                Point::zeros(cfg.dim)
            };
            (Problem::Smooth(quadratic_problem(&spectrum, &b, cfg.seed)?), None)
        }
        ProblemKind::PlSine => (Problem::Smooth(pl_sine_problem()), None),
        ProblemKind::Lasso => {
            let (obj, l) = lasso_instance(cfg.dim, cfg.q, cfg.lipschitz, cfg.lambda, cfg.seed)?;
            (Problem::Composite(obj), Some(l))
        }
    };
    let dim = match &problem {
        Problem::Smooth(o) => o.dim(),
        Problem::Composite(o) => o.dim(),
    };
    let x0 = match (cfg.x0, cfg.problem) {
        (Some(v), _) => Point::from_element(dim, v),
        (None, ProblemKind::PlSine) => Point::from_element(1, 2.0),
        (None, _) => sample_box(dim, 1, 1.0, cfg.seed.wrapping_add(404)).remove(0),
    };
    Ok(Instance { problem, x0, lambda })
}

fn regime_constant(regime: Regime, smooth: &SmoothObjective, composite_qg: Option<f64>) -> Result<f64> {
    let mu = match regime {
        Regime::StronglyConvex => smooth.strong_convexity(),
        Regime::QuadraticGrowth => composite_qg.or(smooth.qg_constant()).or(smooth.strong_convexity()),
        Regime::PolyakLojasiewicz => smooth.pl_constant(),
    };
    mu.ok_or_else(|| Error::Config(format!("problem `{}` has no constant for the {} regime", smooth.name(), regime)))
}

/// Resolves and validates the solver's parameters. Fails before any iteration runs.
pub fn resolve_bundle(cfg: &ExperimentConfig, inst: &Instance) -> Result<Bundle> {
    let (smooth, composite_qg) = match &inst.problem {
        Problem::Smooth(o) => (o, None),
        Problem::Composite(o) => (o.smooth(), o.qg_constant()),
    };
    let lipschitz = smooth.lipschitz();
    match cfg.solver {
        Solver::Agm | Solver::Ode if matches!(inst.problem, Problem::Composite(_)) => {
            Err(Error::Config(format!("solver `{}` needs a smooth problem; use pgm for lasso", cfg.solver)))
        }
        Solver::Agm => {
            let mu = regime_constant(cfg.regime, smooth, None)?;
            Ok(Bundle::Agm(agm_params(cfg.regime, mu, lipschitz, cfg.gamma, cfg.omega, cfg.alpha)?))
        }
        Solver::Pgm => {
            let mu = regime_constant(cfg.regime, smooth, composite_qg)?;
            Ok(Bundle::Pgm(pgm_params(cfg.regime, mu, lipschitz, cfg.omega, cfg.alpha)?))
        }
        Solver::Ode => {
            let mu = regime_constant(cfg.regime, smooth, None)?;
            let beta = cfg.beta.unwrap_or(1.0 / lipschitz.sqrt());
            let alpha = cfg.alpha.unwrap_or_else(|| ode_default_alpha(cfg.regime, mu, beta, cfg.omega));
            let p = ode_params(cfg.regime, mu, alpha, beta, cfg.omega, cfg.theta)?;
            Ok(Bundle::Ode(p))
        }
    }
}

/// Runs one solver on a prepared instance. With `certify`, AGM/PGM bundles are
/// re-checked and energies are certified.
pub fn run_instance(cfg: &ExperimentConfig, inst: &Instance, bundle: &Bundle, certify: bool) -> Result<Trace> {
    if certify {
        let v = match bundle {
            Bundle::Agm(p) => check_constraints(p, cfg.regime),
            Bundle::Pgm(p) => check_constraints(p, cfg.regime),
            Bundle::Ode(p) => check_constraints(p, cfg.regime),
        };
        if !v.is_empty() {
            return Err(Error::Constraints(v));
        }
    }
    match (bundle, &inst.problem) {
        (Bundle::Agm(p), Problem::Smooth(o)) => agm_run(o, p, &inst.x0, cfg.iterations, certify),
        (Bundle::Pgm(p), Problem::Composite(o)) => pgm_run(o, p, &inst.x0, cfg.iterations, certify),
        (Bundle::Pgm(p), Problem::Smooth(o)) => {
            let mut c = CompositeObjective::new(o.clone(), ProxTerm::Zero);
            if let (Some(x), Some(f)) = (o.minimizer(), o.min_value()) {
                c = c.with_minimizer(x.clone(), f)?;
            }
            if let Some(mu) = o.qg_constant() {
                c = c.with_qg_constant(mu)?;
            }
            pgm_run(&c, p, &inst.x0, cfg.iterations, certify)
        }
        (Bundle::Ode(p), Problem::Smooth(o)) => {
            let horizon = cfg.horizon.unwrap_or(20.0 / p.decay_rate());
            ode_run(o, p, &inst.x0, horizon, cfg.dt)
        }
        _ => Err(Error::Config(format!("solver `{}` cannot run on this problem", cfg.solver))),
    }
}

/// A finished run and where its artifacts went.
#[derive(Debug)]
pub struct Outcome {
    pub trace: Trace,
    pub csv_path: PathBuf,
    pub json_path: PathBuf,
}

impl Outcome {
    /// Process exit status: 0 on success, 1 if a requested certificate or bound
    /// failed, 3 if the solver aborted.
    pub fn exit_code(&self, enforce: bool) -> i32 {
        if self.trace.error.is_some() {
            3
        } else if enforce && !self.trace.summary.passed() {
            1
        } else {
            0
        }
    }
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(())
}

/// Writes the trace CSV and a JSON document `{config, lambda, summary}`.
pub fn write_artifacts(cfg: &ExperimentConfig, inst: &Instance, trace: &Trace) -> Result<(PathBuf, PathBuf)> {
    let (csv_path, json_path) = (cfg.csv_path(), cfg.json_path());
    ensure_parent(&csv_path)?;
    ensure_parent(&json_path)?;
    trace.write_csv_file(&csv_path)?;
    let doc = serde_json::json!({ "config": cfg, "lambda": inst.lambda, "summary": trace.summary });
    let file = std::fs::File::create(&json_path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), &doc)?;
    Ok((csv_path, json_path))
}

/// Validates the config, runs the solver and writes the CSV trace and JSON
/// summary. Solver aborts still persist the partial trace; they surface through
/// `trace.error` and [`Outcome::exit_code`].
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome> {
    let inst = build_instance(cfg)?;
    let bundle = resolve_bundle(cfg, &inst)?;
    let trace = run_instance(cfg, &inst, &bundle, cfg.certify)?;
    let (csv_path, json_path) = write_artifacts(cfg, &inst, &trace)?;
    Ok(Outcome { trace, csv_path, json_path })
}

/// Cartesian grid `gammas × omegas` around `base`, with certification on.
pub fn sweep_configs(base: &ExperimentConfig) -> Vec<ExperimentConfig> {
    let mut out = Vec::with_capacity(base.gammas.len() * base.omegas.len());
    for &g in &base.gammas {
        for &w in &base.omegas {
            let mut c = base.clone();
            c.gamma = Some(g);
            c.omega = w;
            c.certify = true;
            c.csv = None;
            c.json = None;
            out.push(c);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateRow {
    pub gamma: Option<f64>,
    pub omega: f64,
    pub rho_theory: f64,
    pub rho_emp: Option<f64>,
    pub iterations_to_tol: Option<usize>,
    pub certificates_checked: usize,
    pub certificates_failed: usize,
    pub bound_violations: usize,
    pub passed: bool,
    /// `ρ_theory` divided by that of the `γ = 1, ω = 0` row, when present.
    pub ratio_to_nesterov: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateTable {
    pub rows: Vec<RateRow>,
}

impl RateTable {
    pub fn all_passed(&self) -> bool {
        self.rows.iter().all(|r| r.passed)
    }

    pub fn to_text(&self) -> String {
        fn opt(v: Option<f64>) -> String {
            v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into())
        }
        let header = ["gamma", "omega", "rho_theory", "rho_emp", "iters_to_1e-9", "certificates", "ratio"];
        let body: Vec<[String; 7]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.gamma.map(|g| format!("{g}")).unwrap_or_else(|| "-".into()),
                    format!("{}", r.omega),
                    format!("{:.6e}", r.rho_theory),
                    opt(r.rho_emp),
                    r.iterations_to_tol.map(|k| k.to_string()).unwrap_or_else(|| "-".into()),
                    format!(
                        "{}/{} {}",
                        r.certificates_checked - r.certificates_failed,
                        r.certificates_checked,
                        if r.passed { "ok" } else { "FAILED" }
                    ),
                    r.ratio_to_nesterov.map(|x| format!("{x:.4}")).unwrap_or_else(|| "-".into()),
                ]
            })
            .collect();
        let mut widths = header.map(str::len);
        for row in &body {
            for (w, cell) in widths.iter_mut().zip(row) {
                *w = (*w).max(cell.chars().count());
            }
        }
        let mut out = String::new();
        let line = |cells: &[&str], out: &mut String| {
            let parts: Vec<String> = cells.iter().zip(widths).map(|(c, w)| format!("{c:>w$}")).collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&header, &mut out);
        for row in &body {
            let cells: Vec<&str> = row.iter().map(String::as_str).collect();
            line(&cells, &mut out);
        }
        out
    }

    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Runs every config (concurrently) on one shared instance and tabulates rates.
/// Rows are sorted by `(γ, ω)`. With `write` set, each run's artifacts are persisted.
pub fn rate_table(configs: &[ExperimentConfig], write: bool) -> Result<RateTable> {
    let Some(first) = configs.first() else {
        return Ok(RateTable { rows: Vec::new() });
    };
    let key = first.instance_key();
    if configs.iter().any(|c| c.instance_key() != key || c.problem != first.problem) {
        return Err(Error::Config("rate table configs must share one problem instance".into()));
    }
    let inst = build_instance(first)?;
    let bundles = configs.iter().map(|c| resolve_bundle(c, &inst)).collect::<Result<Vec<_>>>()?;
    let mut rows = configs
        .par_iter()
        .zip(bundles.par_iter())
        .map(|(cfg, bundle)| {
            let trace = run_instance(cfg, &inst, bundle, true)?;
            if write {
                write_artifacts(cfg, &inst, &trace)?;
            }
            let s = &trace.summary;
            Ok(RateRow {
                gamma: match bundle {
                    Bundle::Agm(p) => Some(p.gamma()),
                    Bundle::Ode(p) => Some(p.gamma()),
                    Bundle::Pgm(_) => None,
                },
                omega: cfg.omega,
                rho_theory: bundle.rate(),
                rho_emp: s.rate_fitted,
                iterations_to_tol: s.iterations_to_tol,
                certificates_checked: s.certificates_checked,
                certificates_failed: s.certificates_failed,
                bound_violations: s.bound_violations,
                passed: s.passed(),
                ratio_to_nesterov: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    rows.sort_by(|a, b| {
        a.gamma
            .unwrap_or(f64::NEG_INFINITY)
            .total_cmp(&b.gamma.unwrap_or(f64::NEG_INFINITY))
            .then(a.omega.total_cmp(&b.omega))
    });
    if let Some(base) = rows.iter().find(|r| r.gamma == Some(1.0) && r.omega == 0.0).map(|r| r.rho_theory) {
        for r in &mut rows {
            r.ratio_to_nesterov = Some(r.rho_theory / base);
        }
    }
    Ok(RateTable { rows })
}

/// `ρ(γ₁, ω₁)/ρ(γ₂, ω₂)` from the strongly convex closed forms at ratio `q`.
pub fn sc_rate_ratio(q: f64, num: (f64, f64), den: (f64, f64)) -> Result<f64> {
    let a = crate::params::agm_params_sc(q, 1.0, num.0, num.1)?;
    let b = crate::params::agm_params_sc(q, 1.0, den.0, den.1)?;
    Ok(a.rho() / b.rho())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_exact_geometric() {
        let gaps: Vec<f64> = (0..200).map(|k| 7.0 * 1.1f64.powi(-k)).collect();
        let rho = fit_linear_rate(&gaps, DEFAULT_FIT_WINDOW).rate().unwrap();
        assert!((rho - 0.1).abs() <= 1e-12, "{rho}");
    }

    #[test]
    fn fit_constant_is_zero() {
        let rho = fit_linear_rate(&[3.0; 100], DEFAULT_FIT_WINDOW).rate().unwrap();
        assert_eq!(rho, 0.0);
    }

    #[test]
    fn fit_floor_is_adjustable() {
        let mut gaps: Vec<f64> = (0..40).map(|k| 0.5f64.powi(k * 2)).collect();
        gaps.push(0.0);
        assert!(matches!(fit_linear_rate(&gaps, 0.5), RateFit::Indeterminate { .. }));
        let rho = fit_linear_rate_floor(&gaps, 0.5, 0.0).rate().unwrap();
        assert!((rho - 3.0).abs() <= 1e-12, "{rho}");
    }

    #[test]
    fn fit_needs_enough_points() {
        assert_eq!(fit_linear_rate(&[1.0; 30], 0.5), RateFit::Indeterminate { points: 15 });
        let mut gaps = vec![1.0; 100];
        gaps[5] = 0.0;
        assert!(matches!(fit_linear_rate(&gaps, 0.5), RateFit::Indeterminate { .. }));
    }

    #[test]
    fn config_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.apply_kv("problem = lasso # comment\n\ngamma=1.5\nomega = 0.5\nlambda = 0.1\ngammas = 1,2\n").unwrap();
        assert_eq!(cfg.problem, ProblemKind::Lasso);
        assert_eq!(cfg.gamma, Some(1.5));
        assert_eq!(cfg.gammas, vec![1.0, 2.0]);
        let back = ExperimentConfig::from_kv_str(&cfg.to_kv_string()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn config_errors_name_the_problem() {
        assert!(matches!(ExperimentConfig::from_kv_str("colour = red"), Err(Error::Config(m)) if m.contains("colour")));
        assert!(ExperimentConfig::from_kv_str("dim 5").is_err());
        assert!(ExperimentConfig::from_kv_str("regime = convex").is_err());
    }

    #[test]
    fn gamma_three_is_rejected_before_running() {
        let cfg = ExperimentConfig::from_kv_str("dim = 5\ngamma = 3").unwrap();
        let inst = build_instance(&cfg).unwrap();
        match resolve_bundle(&cfg, &inst) {
            Err(Error::Constraints(v)) => assert!(v.iter().any(|x| x.hypothesis.contains("γ ∈ [1, 2]"))),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn lasso_weight_gives_sparse_minimizer() {
        let (obj, l) = lasso_instance(8, 0.1, 1.0, None, 3).unwrap();
        assert!(l > 0.0);
        assert!(zero_fraction(obj.minimizer().unwrap()) >= LASSO_MIN_ZERO_FRACTION);
    }

    #[test]
    fn sweep_grid_size() {
        assert_eq!(sweep_configs(&ExperimentConfig::default()).len(), 15);
    }

    #[test]
    fn single_row_table() {
        let cfg = ExperimentConfig::from_kv_str("dim = 5\nq = 0.1\niterations = 200\ngamma = 1").unwrap();
        let t = rate_table(std::slice::from_ref(&cfg), false).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!(t.all_passed());
        assert_eq!(t.rows[0].ratio_to_nesterov, Some(1.0));
        assert_eq!(t.to_text().lines().count(), 2);
    }

    #[test]
    fn mismatched_instances_rejected() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.seed = 9;
        assert!(rate_table(&[a, b], false).is_err());
    }

    // Ratios of the strongly convex closed forms at q = 1e−4, compared with the
    // expressions obtained by substituting αh into ρ by hand.
    #[test]
    fn rate_ratios_at_small_q() {
        let q: f64 = 1e-4;
        let s = q.sqrt();
        let r21 = sc_rate_ratio(q, (2.0, 1.0), (1.0, 0.0)).unwrap();
        assert!((r21 - 2.0 * (1.0 + s) / (1.0 + 4.0 * s)).abs() <= 1e-12);
        assert!((r21 - 1.9423).abs() < 1e-4);
        let r20 = sc_rate_ratio(q, (2.0, 0.0), (1.0, 0.0)).unwrap();
        assert!((1.40..=1.43).contains(&r20), "{r20}");
        let tiny = sc_rate_ratio(1e-12, (2.0, 1.0), (1.0, 0.0)).unwrap();
        assert!((tiny - 2.0).abs() < 1e-5);
        let tiny = sc_rate_ratio(1e-12, (2.0, 0.0), (1.0, 0.0)).unwrap();
        assert!((tiny - 2f64.sqrt()).abs() < 1e-5);
    }
}
