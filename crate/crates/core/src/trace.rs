//! Run records shared by the solvers: per-step rows, certificate results and
//! the JSON summary.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::Regime;

/// Outcome of one contraction check `(1+Ah)E_{k+1} ≤ E_k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CertificateResult {
    pub k: usize,
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
    pub passed: bool,
}

/// Slack budget for certificates and bound checks.
///
/// Certificates pass when `lhs ≤ rhs + abs·(1+|E₀|) + rel·|rhs|`; gap bounds
/// pass when `gap ≤ bound·(1+rel) + bound_abs·(1+gap₀)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub rel: f64,
    pub abs: f64,
    pub bound_abs: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { rel: 1e-9, abs: 1e-12, bound_abs: 1e-12 }
    }
}

impl Tolerances {
    pub fn bound_holds(&self, gap: f64, bound: f64, gap0: f64) -> bool {
        gap <= bound * (1.0 + self.rel) + self.bound_abs * (1.0 + gap0.abs())
    }
}

/// Checks `factor·e_next ≤ e_curr` with slack `tol_abs + tol_rel·|e_curr|`.
pub fn certify_contraction(
    k: usize,
    e_curr: f64,
    e_next: f64,
    factor: f64,
    tol_rel: f64,
    tol_abs: f64,
) -> CertificateResult {
    let lhs = factor * e_next;
    let rhs = e_curr;
    let slack = rhs - lhs;
    let passed = lhs <= rhs + tol_abs + tol_rel * rhs.abs();
    CertificateResult { k, lhs, rhs, slack, passed }
}

/// One row of a discrete run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationRecord {
    pub k: usize,
    pub f_gap_x: Option<f64>,
    pub f_gap_y: Option<f64>,
    pub grad_norm: f64,
    pub energy: Option<f64>,
    pub certificate_slack: Option<f64>,
    pub theorem_bound: Option<f64>,
}

/// One sample of a continuous run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeRecord {
    pub t: f64,
    pub f_gap: Option<f64>,
    pub energy: Option<f64>,
    pub envelope: Option<f64>,
    pub certificate_slack: Option<f64>,
    /// Error budget for `energy` over the step ending here: step-halving estimate of the
    /// integration error plus the rounding floor of both endpoints.
    #[serde(skip)]
    pub local_error: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Agm,
    Pgm,
    Ode,
}

impl std::fmt::Display for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Solver::Agm => "agm",
            Solver::Pgm => "pgm",
            Solver::Ode => "ode",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Rows {
    Iterations(Vec<IterationRecord>),
    Times(Vec<TimeRecord>),
}

impl Rows {
    pub fn len(&self) -> usize {
        match self {
            Rows::Iterations(r) => r.len(),
            Rows::Times(r) => r.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Aggregate facts about a run, emitted as JSON.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Summary {
    pub solver: Solver,
    pub regime: Regime,
    pub problem: String,
    pub params: serde_json::Value,
    /// Whether `x*`, `f*` were available so energies could be certified.
    pub certified: bool,
    pub steps: usize,
    pub initial_gap: Option<f64>,
    pub final_gap: Option<f64>,
    pub certificates_checked: usize,
    pub certificates_failed: usize,
    pub bound_checked: usize,
    pub bound_violations: usize,
    /// Auxiliary per-iterate inequalities (proximal corollary) checked and failed.
    pub corollary_checked: usize,
    pub corollary_violations: usize,
    /// `ρ` (discrete) or the energy decay rate (continuous).
    pub rate_theory: f64,
    pub rate_fitted: Option<f64>,
    pub iterations_to_tol: Option<usize>,
    pub max_form_deviation: Option<f64>,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

impl Summary {
    pub fn passed(&self) -> bool {
        self.error.is_none()
            && self.certificates_failed == 0
            && self.bound_violations == 0
            && self.corollary_violations == 0
    }
}

/// Full record of one solver run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trace {
    pub rows: Rows,
    pub certificates: Vec<CertificateResult>,
    pub summary: Summary,
    pub error: Option<Error>,
}

impl Trace {
    pub fn iterations(&self) -> &[IterationRecord] {
        match &self.rows {
            Rows::Iterations(r) => r,
            Rows::Times(_) => &[],
        }
    }

    pub fn times(&self) -> &[TimeRecord] {
        match &self.rows {
            Rows::Times(r) => r,
            Rows::Iterations(_) => &[],
        }
    }

    pub fn failed_certificates(&self) -> impl Iterator<Item = &CertificateResult> {
        self.certificates.iter().filter(|c| !c.passed)
    }

    /// Writes the rows as CSV; missing values become empty cells.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        match &self.rows {
            Rows::Iterations(rows) => {
                for r in rows {
                    w.serialize(r)?;
                }
                if rows.is_empty() {
                    w.write_record([
                        "k",
                        "f_gap_x",
                        "f_gap_y",
                        "grad_norm",
                        "energy",
                        "certificate_slack",
                        "theorem_bound",
                    ])?;
                }
            }
            Rows::Times(rows) => {
                for r in rows {
                    w.serialize(r)?;
                }
                if rows.is_empty() {
                    w.write_record(["t", "f_gap", "energy", "envelope", "certificate_slack"])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_csv_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn write_json_file(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer_pretty(std::io::BufWriter::new(file), &self.summary)?;
        Ok(())
    }
}

/// First index whose gap falls to `rel·gap₀` or below.
pub fn iterations_to(gaps: &[f64], gap0: f64, rel: f64) -> Option<usize> {
    gaps.iter().position(|&g| g <= rel * gap0)
}
