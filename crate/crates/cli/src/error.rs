use std::io;
use std::path::PathBuf;

use oplrp_core::LrpError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Engine(#[from] LrpError),

    /// The engine ran but its output failed a consistency check.
    #[error("{0}")]
    Check(String),

    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },

    #[error("{}: {source}", path.display())]
    Json { path: PathBuf, source: serde_json::Error },
}

impl CliError {
    /// Process exit status: 1 for bad invocations and unreadable files,
    /// 2 when the engine itself rejects the graph or fails mid-run.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Engine(_) | CliError::Check(_) => 2,
            _ => 1,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>) -> impl FnOnce(io::Error) -> CliError {
        let path = path.into();
        move |source| CliError::Io { path, source }
    }
}

pub type CliResult<T> = Result<T, CliError>;
