use std::path::PathBuf;

use merton_delay::{Error, ValidationReport};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("validation failed:\n{0}")]
    Validation(ValidationReport),
    #[error("check failed:\n{0}")]
    CheckFailed(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Model(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) | CliError::Io { .. } => 2,
            CliError::Validation(_) | CliError::Model(Error::Validation(_)) => 3,
            CliError::CheckFailed(_) => 4,
            CliError::Model(_) => 2,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Validation(report) => CliError::Validation(report),
            other => CliError::Model(other),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;
