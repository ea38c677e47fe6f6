use std::path::PathBuf;

use pmelab_core::PmeError;

#[derive(Debug)]
pub enum CliError {
    /// A config value at `path` (dotted key path, empty for the document root) is invalid.
    Config { path: String, reason: String },
    Io { path: PathBuf, source: std::io::Error },
    Core(PmeError),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config { path, reason } if path.is_empty() => write!(f, "config: {reason}"),
            CliError::Config { path, reason } => write!(f, "config key `{path}`: {reason}"),
            CliError::Io { path, source } => write!(f, "i/o error at {}: {source}", path.display()),
            CliError::Core(e) => e.fmt(f),
        }
    }
}

impl std::error::Error for CliError {}

impl From<PmeError> for CliError {
    fn from(e: PmeError) -> Self {
        CliError::Core(e)
    }
}
