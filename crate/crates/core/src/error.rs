use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite value in {what}")]
    NonFinite { what: String },

    #[error("dimension mismatch: expected {expected}, got {got} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A structured prior-variance target cannot be realised by the requested
    /// kernel family. `equation` names the violated component equation.
    #[error("infeasible kernel target: {equation} ({detail})")]
    Infeasible {
        equation: &'static str,
        detail: String,
    },

    #[error("negative kernel component weight {name} = {value}")]
    NegativeWeight { name: &'static str, value: f64 },

    #[error("cholesky factorization failed after jitter ladder {ladder:?}")]
    Factorization { ladder: Vec<f64> },

    #[error("prior covariance is singular: zero variance at {effect}")]
    SingularPrior { effect: String },

    #[error("explicit feature dimension {dim} exceeds cap {cap}")]
    CapExceeded { dim: usize, cap: usize },

    #[error("negative posterior variance {value} for {effect}")]
    NegativeVariance { effect: String, value: f64 },

    #[error("parse error in {path:?} at row {row}, column {column}: {message}")]
    Parse {
        path: PathBuf,
        row: usize,
        column: usize,
        message: String,
    },

    #[error("{path:?}: {message}")]
    Format { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn non_finite(what: impl Into<String>) -> Self {
        Error::NonFinite { what: what.into() }
    }
}

pub(crate) fn ensure_finite(values: &[f64], what: &str) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::non_finite(what))
    }
}
