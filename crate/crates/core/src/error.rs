use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParam { field: &'static str, reason: String },

    #[error("parse error at `{path}`: {message}")]
    Parse { path: String, message: String },

    #[error("referential integrity: {0}")]
    Integrity(String),

    #[error("invalid document: {0}")]
    Invalid(String),

    #[error("cannot estimate cluster count: {0}")]
    Estimation(String),

    #[error("no wireless trajectories")]
    NoTrajectories,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("not enough data: {0}")]
    Insufficient(String),

    #[error("no valid queries: every query lacks a cross-camera match")]
    NoValidQueries,

    #[error("unsupported format version {found} (expected {expected})")]
    FormatVersion { found: u32, expected: u32 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
