use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A weight has no usable mass (or a non-positive value where a logarithm is taken).
    #[error("degenerate weight: {0}")]
    DegenerateWeight(String),

    /// An entropy bump fails the convergence requirement of the constant it feeds.
    #[error("integrability violation: {0}")]
    Integrability(String),

    #[error("exponent domain error: {0}")]
    ExponentDomain(String),

    #[error("window too small: {0}")]
    Window(String),

    #[error("box is not aligned to the mesh: {0}")]
    Misaligned(String),

    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("sparse construction failed: {0}")]
    Construction(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("parse error in {path}: {message}")]
    Parse { path: PathBuf, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            message: message.into(),
        }
    }
}
