//! File formats, timing and the experiment runner on top of `orderless-core`.

pub mod bench;
pub mod cli;
pub mod config;
pub mod experiment;
pub mod format;
pub mod report;

use orderless_core::training::TrainError;
use orderless_core::{DataError, ModelError};
use thiserror::Error;

pub use format::FormatError;

/// Command failure, split by exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad input: flags, configs, malformed files. Exit code 1.
    #[error("{0}")]
    Validation(String),
    /// Everything else: IO, numerical failure. Exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl From<FormatError> for CliError {
    fn from(e: FormatError) -> Self {
        match e {
            FormatError::Io { .. } => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::InvalidConfig(_) | TrainError::EmptyDataset => CliError::Validation(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Dimension { .. } | ModelError::InvalidSample(_) | ModelError::InvalidClass { .. } => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Runtime(e.to_string()),
        }
    }
}
