use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: parse error: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("non-finite loss for samples {sample_ids:?}: {detail}")]
    NonFinite {
        sample_ids: Vec<String>,
        detail: String,
    },

    #[error("checkpoint integrity error: {0}")]
    Integrity(String),

    #[error("join error: {} key(s) missing: {}", .missing.len(), .missing.join(", "))]
    Join { missing: Vec<String> },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Whether the error stems from bad user input rather than a failure while
    /// running. The CLI maps the former to exit code 1 and the latter to 2.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::Validation(_)
                | Error::Format(_)
                | Error::Truncated { .. }
                | Error::Config(_)
                | Error::Join { .. }
                | Error::Json(_)
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Format(_) => "format",
            Error::Truncated { .. } => "truncated",
            Error::Config(_) => "config",
            Error::Shape(_) => "shape",
            Error::NonFinite { .. } => "non_finite",
            Error::Integrity(_) => "integrity",
            Error::Join { .. } => "join",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
        }
    }
}
