//! Error type shared across the crate.

use std::fmt;

/// Unified error for tensor math, model assembly, training, and I/O.
#[derive(Debug)]
pub enum AvError {
    /// Incompatible tensor extents for an operation.
    ShapeMismatch(String),
    /// NaN or infinity encountered where finite values are required.
    NonFinite(String),
    /// Invalid argument or configuration value.
    InvalidArgument(String),
    /// Architecture name not in the catalog.
    UnknownArchitecture(String),
    /// Malformed or corrupted file; `offset` is the byte position where the
    /// problem was detected.
    Format { offset: u64, message: String },
    /// Training aborted because the loss became non-finite.
    NonFiniteLoss { epoch: usize, batch: usize },
    Io(std::io::Error),
}

impl AvError {
    /// Short machine-parseable category used as the CLI diagnostic prefix.
    pub fn code(&self) -> &'static str {
        match self {
            AvError::ShapeMismatch(_) => "shape-mismatch",
            AvError::NonFinite(_) => "non-finite",
            AvError::InvalidArgument(_) => "invalid-argument",
            AvError::UnknownArchitecture(_) => "unknown-arch",
            AvError::Format { .. } => "format",
            AvError::NonFiniteLoss { .. } => "non-finite-loss",
            AvError::Io(_) => "io",
        }
    }
}

impl fmt::Display for AvError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AvError::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            AvError::NonFinite(msg) => write!(f, "non-finite value: {msg}"),
            AvError::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            AvError::UnknownArchitecture(name) => write!(f, "unknown architecture: {name}"),
            AvError::Format { offset, message } => {
                write!(f, "format error at byte {offset}: {message}")
            }
            AvError::NonFiniteLoss { epoch, batch } => {
                write!(f, "non-finite loss at epoch {epoch}, batch {batch}")
            }
            AvError::Io(err) => write!(f, "io error: {err}"),
        }
    }
}

impl std::error::Error for AvError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            AvError::Io(err) => Some(err),
            _ => None,
        }
    }
}

impl From<std::io::Error> for AvError {
    fn from(err: std::io::Error) -> Self {
        AvError::Io(err)
    }
}

pub type Result<T> = std::result::Result<T, AvError>;
