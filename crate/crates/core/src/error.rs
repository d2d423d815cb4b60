use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// An input parameter is outside its admissible domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// A mesh (or other structured input) violates a named invariant.
    #[error("validation failed ({invariant}): {detail}")]
    Validation {
        invariant: &'static str,
        detail: String,
    },

    #[error("angle outside domain: {0}")]
    Domain(String),

    #[error("electrode layout error: {0}")]
    Layout(String),

    #[error("nonpositive conductivity at node {node}: {value}")]
    Conductivity { node: usize, value: f64 },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn validation(invariant: &'static str, detail: impl Into<String>) -> Self {
        Error::Validation {
            invariant,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
