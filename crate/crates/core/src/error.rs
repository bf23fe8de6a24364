//! Error type shared by the tensor core, layers, optimizers, and diagnostics.

use std::fmt;

/// Errors produced by the numeric core and training machinery.
#[derive(Debug)]
pub enum CoreError {
    /// A scalar or tensor argument violated a precondition.
    InvalidArgument(String),
    /// Operand shapes do not conform.
    ShapeMismatch(String),
    /// A non-finite norm, loss, or parameter was detected during an
    /// optimizer step. Carries the name of the offending parameter group.
    Divergence { group: String, detail: String },
    /// A checkpoint file could not be read or did not match the model.
    Checkpoint(String),
    /// Underlying I/O failure, with the path that was being written or read.
    Io { path: String, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, CoreError>;

impl fmt::Display for CoreError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoreError::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            CoreError::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
            CoreError::Divergence { group, detail } => {
                write!(f, "divergence in group '{group}': {detail}")
            }
            CoreError::Checkpoint(msg) => write!(f, "checkpoint error: {msg}"),
            CoreError::Io { path, source } => write!(f, "i/o error on '{path}': {source}"),
        }
    }
}

impl std::error::Error for CoreError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            CoreError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}
