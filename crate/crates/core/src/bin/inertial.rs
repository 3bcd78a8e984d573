use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use inertial::harness::{rate_table, run_experiment, sweep_configs, ExperimentConfig, Outcome, RateTable};
use inertial::trace::Solver;
use inertial::Error;

#[derive(Parser)]
#[command(name = "inertial", version, about = "Certified inertial first-order methods")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver and write its trace.
    Solve(RunArgs),
    /// Run with energy certificates and theorem bounds enforced.
    Certify(RunArgs),
    /// Certified runs over a (gamma, omega) grid, with a rate table.
    Sweep(RunArgs),
    /// Integrate the continuous dynamics.
    Ode(RunArgs),
    /// Rate table (theoretical and fitted) over a (gamma, omega) grid.
    Rates(RunArgs),
}

#[derive(Args, Clone, Default)]
struct RunArgs {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// quadratic, pl_sine or lasso.
    #[arg(long)]
    problem: Option<String>,
    /// agm, pgm or ode.
    #[arg(long)]
    solver: Option<String>,
    /// sc, qg or pl.
    #[arg(long)]
    regime: Option<String>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    omega: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    dim: Option<usize>,
    /// Condition ratio mu/L of the generated instance.
    #[arg(long)]
    q: Option<f64>,
    #[arg(long)]
    lambda: Option<f64>,
    /// Fill value for the starting point.
    #[arg(long)]
    x0: Option<f64>,
    #[arg(short = 'k', long = "iters")]
    iters: Option<usize>,
    #[arg(short = 'T', long)]
    horizon: Option<f64>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $INERTIAL_OUT_DIR, else ./out).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long)]
    json: Option<PathBuf>,
    /// Comma-separated gamma grid for sweep/rates.
    #[arg(long)]
    gammas: Option<String>,
    /// Comma-separated omega grid for sweep/rates.
    #[arg(long)]
    omegas: Option<String>,
    /// Any config key, as `key=value`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    quiet: bool,
}

impl RunArgs {
    fn config(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::from_file(path)?,
            None => ExperimentConfig::default(),
        };
        let mut pairs: Vec<(&str, String)> = Vec::new();
        let mut put = |k: &'static str, v: Option<String>| {
            if let Some(v) = v {
                pairs.push((k, v));
            }
        };
        put("problem", self.problem.clone());
        put("solver", self.solver.clone());
        put("regime", self.regime.clone());
        put("gamma", self.gamma.map(|v| v.to_string()));
        put("omega", self.omega.map(|v| v.to_string()));
        put("alpha", self.alpha.map(|v| v.to_string()));
        put("beta", self.beta.map(|v| v.to_string()));
        put("theta", self.theta.map(|v| v.to_string()));
        put("dim", self.dim.map(|v| v.to_string()));
        put("q", self.q.map(|v| v.to_string()));
        put("lambda", self.lambda.map(|v| v.to_string()));
        put("x0", self.x0.map(|v| v.to_string()));
        put("iterations", self.iters.map(|v| v.to_string()));
        put("horizon", self.horizon.map(|v| v.to_string()));
        put("dt", self.dt.map(|v| v.to_string()));
        put("seed", self.seed.map(|v| v.to_string()));
        put("out_dir", self.out.as_ref().map(|p| p.display().to_string()));
        put("csv", self.csv.as_ref().map(|p| p.display().to_string()));
        put("json", self.json.as_ref().map(|p| p.display().to_string()));
        put("gammas", self.gammas.clone());
        put("omegas", self.omegas.clone());
        for (k, v) in pairs {
            cfg.set(k, &v)?;
        }
        for kv in &self.set {
            let (k, v) = kv.split_once('=').ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

fn report(outcome: &Outcome, quiet: bool) {
    if quiet {
        return;
    }
    let s = &outcome.trace.summary;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6e}")).unwrap_or_else(|| "-".into());
    println!("{} on {} ({}), {} steps", s.solver, s.problem, s.regime, s.steps);
    println!("  gap: {} -> {}", fmt(s.initial_gap), fmt(s.final_gap));
    println!("  rate: theory {:.6e}, fitted {}", s.rate_theory, fmt(s.rate_fitted));
    if s.certified {
        println!(
            "  certificates: {} checked, {} failed; bounds: {} checked, {} violated",
            s.certificates_checked, s.certificates_failed, s.bound_checked, s.bound_violations
        );
        if s.corollary_checked > 0 {
            println!("  corollary: {} checked, {} violated", s.corollary_checked, s.corollary_violations);
        }
        for c in outcome.trace.failed_certificates().take(5) {
            println!("    step {}: lhs {:.6e} > rhs {:.6e}", c.k, c.lhs, c.rhs);
        }
    }
    if let Some(e) = &s.error {
        println!("  aborted: {e}");
    }
    println!("  csv: {}", outcome.csv_path.display());
    println!("  json: {}", outcome.json_path.display());
}

fn single(args: &RunArgs, force_solver: Option<Solver>, enforce: bool) -> Result<u8, Error> {
    let mut cfg = args.config()?;
    if let Some(s) = force_solver {
        cfg.solver = s;
    }
    if enforce {
        cfg.certify = true;
    }
    let outcome = run_experiment(&cfg)?;
    report(&outcome, args.quiet);
    Ok(outcome.exit_code(enforce || cfg.certify) as u8)
}

fn table(args: &RunArgs, name: &str, write_runs: bool, default_grid: Option<(&[f64], &[f64])>) -> Result<u8, Error> {
    let mut cfg = args.config()?;
    if let Some((g, w)) = default_grid {
        if args.gammas.is_none() {
            cfg.gammas = g.to_vec();
        }
        if args.omegas.is_none() {
            cfg.omegas = w.to_vec();
        }
    }
    let configs = sweep_configs(&cfg);
    let table: RateTable = rate_table(&configs, write_runs)?;
    let path = cfg.csv.clone().unwrap_or_else(|| cfg.resolved_out_dir().join(format!("{name}.csv")));
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    table.write_csv(std::io::BufWriter::new(std::fs::File::create(&path)?))?;
    if !args.quiet {
        print!("{}", table.to_text());
        println!("table: {}", path.display());
    }
    Ok(if table.all_passed() { 0 } else { 1 })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Solve(a) => single(a, None, false),
        Command::Certify(a) => single(a, None, true),
        Command::Ode(a) => single(a, Some(Solver::Ode), false),
        Command::Sweep(a) => table(a, "sweep", true, None),
        Command::Rates(a) => table(a, "rates", false, Some((&[1.0, 1.5, 2.0], &[0.0, 0.5, 1.0]))),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
