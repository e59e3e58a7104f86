use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{count} of {total} solves did not converge")]
    NonConvergence { count: usize, total: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Solver(#[from] coopbd::Error),
}

impl CliError {
    /// Process exit status: 1 usage, 2 solver trouble, 3 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::NonConvergence { .. } => 2,
            CliError::Io { .. } => 3,
            CliError::Solver(e) => match e {
                coopbd::Error::InvalidConfig(_)
                | coopbd::Error::Infeasible(_)
                | coopbd::Error::Json(_) => 1,
                _ => 2,
            },
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
