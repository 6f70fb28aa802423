use std::path::PathBuf;

use thiserror::Error;
use voxgraph_core::CoreError;
use voxgraph_model::ModelError;

/// Failures surfaced to the shell. Validation problems exit with 1, I/O and
/// compatibility problems with 2.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Compat(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Compat(_) | CliError::Io { .. } => 2,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Io { path, source } => CliError::Io { path, source },
            other => CliError::Validation(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Core(c) => c.into(),
            ModelError::Io { path, source } => CliError::Io { path, source },
            e @ (ModelError::Config { .. } | ModelError::NonFinite { .. }) => {
                CliError::Validation(e.to_string())
            }
            e @ (ModelError::Shape(_) | ModelError::Checkpoint { .. }) => {
                CliError::Compat(e.to_string())
            }
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;
