//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by map synthesis, training, estimation and file I/O.
#[derive(Debug, Error)]
pub enum Error {
    /// A tensor or grid had a different shape than the operation requires.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// More samples were requested than eligible grid cells exist.
    #[error("requested {requested} samples but only {eligible} cells are eligible")]
    NotEnoughCells { requested: usize, eligible: usize },

    /// A covariance factorization failed even after jitter escalation.
    #[error("covariance factorization failed after {attempts} jitter attempts")]
    FactorizationFailed { attempts: usize },

    /// A linear system was singular; typically the kernel Gram matrix at
    /// zero regularization.
    #[error("singular linear system: {0}; use a regularization weight > 0")]
    SingularSystem(String),

    /// Training produced a non-finite loss or gradient.
    #[error("non-finite {what} at step {step}; lower the learning rate or check the data")]
    NonFinite { what: &'static str, step: usize },

    /// A binary tensor file was malformed.
    #[error("bad tensor file {path}: {reason}")]
    BadTensorFile { path: String, reason: String },

    /// A dataset or model directory was missing or inconsistent.
    #[error("bad archive {path}: {reason}")]
    BadArchive { path: String, reason: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error on {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn json(path: impl Into<String>, source: serde_json::Error) -> Self {
        Error::Json { path: path.into(), source }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
