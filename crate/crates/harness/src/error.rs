//! Harness-level errors, split by how the CLI should exit: configuration
//! problems map to exit code 3, everything else to 1 (divergence is a
//! result, not an error, and exits with 2).

use std::fmt;

use lars_core::CoreError;

#[derive(Debug)]
pub enum HarnessError {
    /// A config file failed to parse or validate.
    Config(String),
    /// A dataset file was malformed (bad magic, truncation, count mismatch).
    Data(String),
    /// Propagated numeric-core error.
    Core(CoreError),
    /// I/O outside the core (config files, output directories).
    Io { path: String, source: std::io::Error },
}

pub type Result<T> = std::result::Result<T, HarnessError>;

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::Config(msg) => write!(f, "config error: {msg}"),
            HarnessError::Data(msg) => write!(f, "data error: {msg}"),
            HarnessError::Core(e) => write!(f, "{e}"),
            HarnessError::Io { path, source } => write!(f, "i/o error on '{path}': {source}"),
        }
    }
}

impl std::error::Error for HarnessError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            HarnessError::Core(e) => Some(e),
            HarnessError::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl From<CoreError> for HarnessError {
    fn from(e: CoreError) -> Self {
        HarnessError::Core(e)
    }
}

impl HarnessError {
    pub fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Process exit code the CLI should use for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 3,
            _ => 1,
        }
    }
}
