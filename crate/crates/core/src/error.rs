use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the free-space pipeline and its stages.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("no road plane found: best cell has {best} inliers, {required} required")]
    NoPlaneFound { best: usize, required: usize },

    #[error("color model underdetermined: {found} bootstrap pixels, {required} required")]
    ModelUnderdetermined { found: usize, required: usize },

    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("non-finite or negative cost at element {index}")]
    InvalidCost { index: usize },

    #[error("instance too large for exhaustive search: {pixels} pixels (max {max})")]
    InstanceTooLarge { pixels: usize, max: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed input: {msg}")]
    Format { path: PathBuf, msg: String },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    /// An internal invariant did not hold. Always a bug.
    #[error("invariant violated: {0}")]
    Invariant(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn format(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn check_dims(expected: (usize, usize), found: (usize, usize)) -> Result<()> {
        if expected == found {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected, found })
        }
    }
}
