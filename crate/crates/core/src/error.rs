use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        found: String,
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("{what} is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite {
        what: &'static str,
        min_eigenvalue: f64,
    },

    #[error("{what} is singular or ill-conditioned (smallest singular value {sigma_min:e} below {tolerance:e})")]
    Singular {
        what: &'static str,
        sigma_min: f64,
        tolerance: f64,
    },

    #[error("{what} is rank deficient: rank {rank}, required {required}")]
    RankDeficient {
        what: &'static str,
        rank: usize,
        required: usize,
    },

    #[error("Riccati iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("malformed LMI problem: {0}")]
    MalformedProblem(String),

    #[error("solver finished with status {status:?}")]
    SolverFailed { status: crate::conic::SolveStatus },

    #[error("config error in {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("nothing to write: {0}")]
    Empty(&'static str),

    #[error("csv parse error at line {line}: {message}")]
    Csv { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(context: &'static str, expected: impl ToString, found: impl ToString) -> Self {
        Error::DimensionMismatch {
            context,
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }

    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
