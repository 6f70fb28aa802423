use std::path::PathBuf;

use thiserror::Error;
use voxgraph_core::CoreError;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid config {field}: {msg}")]
    Config { field: String, msg: String },
    #[error("incompatible input: {0}")]
    Shape(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("non-finite {what} at critic step {step}")]
    NonFinite { what: String, step: u64 },
    #[error("checkpoint {path}: {msg}")]
    Checkpoint { path: PathBuf, msg: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ModelError {
    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        ModelError::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ModelError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = ModelError> = std::result::Result<T, E>;
