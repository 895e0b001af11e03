use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config: {0}")]
    Config(String),
    #[error("missing artifact: {0}")]
    Missing(PathBuf),
    #[error(transparent)]
    Core(#[from] sren::Error),
}

impl CliError {
    /// 2 config, 3 I/O, 4 missing artifact, 5 numerical failure, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        use sren::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Missing(_) => 4,
            CliError::Core(e) => match e {
                E::InvalidParameter(_) | E::Json(_) => 2,
                E::Io { .. }
                | E::IdxMagic { .. }
                | E::Truncated { .. }
                | E::Format(_)
                | E::CountMismatch { .. } => 3,
                E::Numerical(_) | E::UndefinedMetric => 5,
                _ => 1,
            },
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
