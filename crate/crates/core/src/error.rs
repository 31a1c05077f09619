//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An argument fell outside the domain of the function or distribution.
    #[error("domain error: {0}")]
    Domain(String),

    /// A model specification referenced columns that do not exist, or the
    /// coefficient layout does not match the specification.
    #[error("schema error: {0}")]
    Schema(String),

    #[error("dataset is empty")]
    EmptyData,

    /// The log-likelihood evaluated to a non-finite value.
    #[error("log-likelihood evaluation failed: {0}")]
    Evaluation(String),

    /// Input file problems, reported against the 1-based line number.
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: usize, message: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error("{failed} of {total} replications failed (limit is 10%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("invalid formula {formula:?}: {message}")]
    Formula { formula: String, message: String },
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
