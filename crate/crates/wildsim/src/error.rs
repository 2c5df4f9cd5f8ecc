use std::path::PathBuf;

/// Everything the command line can fail with, mapped onto exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error(transparent)]
    Core(#[from] wildsim_core::Error),

    #[error("cannot write `{path}`: {source}; check that the directory exists and is writable")]
    Io { path: PathBuf, source: std::io::Error },

    #[error("{0}")]
    Failed(String),
}

impl CliError {
    /// 2 for bad input, 3 when a computation exceeds its budget, 1 when a
    /// run completed but its checks failed.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Core(e) if e.is_budget() => 3,
            CliError::Usage(_) | CliError::Core(_) | CliError::Io { .. } => 2,
            CliError::Failed(_) => 1,
        }
    }

    pub fn remedy(&self) -> Option<&'static str> {
        match self {
            CliError::Core(e) if e.is_budget() => Some("reduce the problem size or raise the budget"),
            CliError::Core(_) => Some("check the parameter values against `wildsim help`"),
            _ => None,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
