use std::path::PathBuf;

use thiserror::Error;

/// Failures of a CLI run; each maps to a process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),

    #[error("cannot access {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{0}")]
    Input(evpinn_core::Error),

    #[error("numerical failure: {0}")]
    Numerical(evpinn_core::Error),
}

impl CliError {
    /// 2 for bad input (config, files, checkpoints), 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io { .. } | CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io { path: path.into(), source }
    }
}

impl From<evpinn_core::Error> for CliError {
    fn from(e: evpinn_core::Error) -> Self {
        use evpinn_core::Error as E;
        match e {
            E::Io(_) | E::Parse(_) | E::UnknownBenchmark(_) => CliError::Input(e),
            _ => CliError::Numerical(e),
        }
    }
}
