use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the core library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("negative probability {value:e} at {index}")]
    NegativeEntry { index: String, value: f64 },

    #[error("distribution at {index} sums to {sum} (tolerance {tol:e})")]
    Normalization { index: String, sum: f64, tol: f64 },

    #[error("invalid ensemble: {0}")]
    Ensemble(String),

    #[error("argument outside the domain of {function}: {detail}")]
    Domain { function: &'static str, detail: String },

    #[error("index {index} out of range (limit {limit})")]
    IndexOutOfRange { index: usize, limit: usize },

    #[error("problem needs {required} table entries, budget is {budget}")]
    BudgetExceeded { required: u128, budget: usize },

    #[error("{0} did not converge")]
    NoConvergence(String),

    #[error("certificate extraction failed: residual {residual:e} above {tol:e}")]
    ExtractionFailed { residual: f64, tol: f64 },

    #[error("analytic branch error: {0}")]
    Branch(String),

    #[error("global-minimum verification failed at theta = {theta} (F = {value:e})")]
    GlobalMinimum { theta: f64, value: f64 },

    #[error("{0}")]
    Monte(String),

    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }

    pub(crate) fn domain(function: &'static str, detail: impl Into<String>) -> Self {
        Error::Domain {
            function,
            detail: detail.into(),
        }
    }
}
