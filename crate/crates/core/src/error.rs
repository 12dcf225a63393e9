//! Shared error type for the pipeline.

use std::path::PathBuf;

/// Errors produced by any pipeline operation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Underlying filesystem failure.
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed file contents (bad magic, truncated header, unparsable line).
    #[error("format error: {0}")]
    Format(String),

    /// Dimension or length disagreement between values that must agree.
    #[error("size error: {0}")]
    Size(String),

    /// An operation received no usable data.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Spline knots are not strictly increasing.
    #[error("invalid knots: {0}")]
    InvalidKnots(String),

    /// Evaluation point outside the supported domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// Index or offset falls outside the addressed data.
    #[error("bounds error: {0}")]
    Bounds(String),

    /// Flow field carries non-finite displacements.
    #[error("invalid flow: {0}")]
    InvalidFlow(String),

    /// Configuration value violates a module invariant.
    #[error("config error: {0}")]
    Config(String),

    /// A scale normalization was requested on a zero-length trajectory.
    #[error("degenerate scale: ground-truth path length is zero while the generated path is not")]
    DegenerateScale,
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
