use thiserror::Error;

/// Errors raised while building problems, deriving parameters or running solvers.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is rank deficient (smallest eigenvalue of AᵀA is {min_eig:e}, largest {max_eig:e})")]
    RankDeficient { min_eig: f64, max_eig: f64 },

    #[error("parameter bundle violates {} hypothesis(es): {}", .0.len(), join_violations(.0))]
    Constraints(Vec<crate::params::Violation>),

    #[error("two-sequence and velocity forms disagree at iteration {iteration} (relative deviation {deviation:e})")]
    FormMismatch { iteration: usize, deviation: f64 },

    #[error("non-finite value at iteration {iteration}")]
    NonFinite { iteration: usize },

    #[error("divergence at iteration {iteration}: gap {gap:e} exceeds 1e6 x initial gap {initial:e}")]
    Diverged {
        iteration: usize,
        gap: f64,
        initial: f64,
    },

    #[error("reference oracle did not converge after {iterations} iterations (|G| = {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("undefined: {0}")]
    Undefined(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

fn join_violations(v: &[crate::params::Violation]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join("; ")
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
