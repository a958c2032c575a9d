use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the kssvm library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("validation error: {0}")]
    Validation(String),
    #[error("dimension mismatch: expected {expected}, got {actual} ({what})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("no comparable pairs: at least one uncensored sample must precede another observed time")]
    NoComparablePairs,
    #[error("numerical error at Newton iteration {iteration}: {message}")]
    Numerical { iteration: usize, message: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("model file error: {0}")]
    ModelFormat(String),
    #[error("unsupported model schema version {found} (this build reads version {supported})")]
    VersionMismatch { found: u64, supported: u64 },
    #[error("unknown kernel kind `{0}`")]
    UnknownKernel(String),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
