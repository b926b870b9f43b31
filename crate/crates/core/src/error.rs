//! Crate-wide error type.

use std::fmt;
use std::io;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by model construction, training, simulation, and I/O.
#[derive(Debug)]
pub enum Error {
    /// A vector or matrix had the wrong length/shape for the operation.
    ShapeMismatch { expected: String, got: String },
    /// A configuration value violated its documented invariant.
    InvalidConfig(String),
    /// An input value was outside its admissible range.
    OutOfRange(String),
    /// Training or simulation produced a non-finite intermediate value.
    NonFinite(String),
    /// A physical model was evaluated at a degenerate point.
    Degenerate(String),
    /// A search or sampling procedure produced no admissible result.
    Empty(String),
    /// A data or model file failed structural validation.
    Format { path: String, detail: String },
    Io(io::Error),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::ShapeMismatch { expected, got } => {
                write!(f, "shape mismatch: expected {expected}, got {got}")
            }
            Error::InvalidConfig(msg) => write!(f, "invalid configuration: {msg}"),
            Error::OutOfRange(msg) => write!(f, "value out of range: {msg}"),
            Error::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            Error::Degenerate(msg) => write!(f, "degenerate input: {msg}"),
            Error::Empty(msg) => write!(f, "empty result: {msg}"),
            Error::Format { path, detail } => write!(f, "malformed file {path}: {detail}"),
            Error::Io(err) => write!(f, "i/o error: {err}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<io::Error> for Error {
    fn from(err: io::Error) -> Self {
        Error::Io(err)
    }
}

impl Error {
    pub(crate) fn shape(expected: impl Into<String>, got: impl Into<String>) -> Self {
        Error::ShapeMismatch {
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub(crate) fn format(path: impl Into<String>, detail: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            detail: detail.into(),
        }
    }
}
