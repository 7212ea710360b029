use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("singular evaluation: {0}")]
    Singular(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("fields live on different grids")]
    GridMismatch,

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid curve: {0}")]
    InvalidCurve(String),

    #[error("curve self-intersects at time {t:e} (step {step})")]
    SelfIntersection { step: usize, t: f64 },

    #[error("linear solver did not converge: {iterations} iterations, relative residual {residual:e}")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("field never crosses level {0}")]
    NoCrossing(f64),

    #[error("division by zero: {0}")]
    DivisionByZero(String),

    #[error("{name}: |value - 1| = {deviation:e} exceeds tolerance {tolerance:e}")]
    Tolerance {
        name: String,
        deviation: f64,
        tolerance: f64,
    },

    #[error("{path}: parse error at line {line}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },

    #[error("invalid value for `{field}`: {message}")]
    Validation { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn validation(field: &str, message: impl Into<String>) -> Self {
        Error::Validation {
            field: field.to_string(),
            message: message.into(),
        }
    }

    /// Whether the error came from configuration input rather than a computation.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Validation { .. } | Error::Parse { .. })
    }
}
