use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// A structural or semantic rule was violated. `path` locates the
    /// offending element, e.g. `nodes[3].story`.
    #[error("invalid {path}: {msg}")]
    Invalid { path: String, msg: String },

    #[error("geometry error: cuboids {a} and {b} overlap (volume {volume:.3e} m^3)")]
    Overlap { a: usize, b: usize, volume: f64 },

    #[error("parse error at {path}: {msg}")]
    Parse { path: String, msg: String },

    #[error("undefined conditions: design has no used voxels")]
    NoUsedVoxels,

    #[error("assignment is soft; sample a hard assignment first")]
    SoftAssignment,

    #[error("generation failed after {attempts} attempts: {reason}")]
    GenerationFailed { attempts: usize, reason: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    pub fn invalid(path: impl Into<String>, msg: impl Into<String>) -> Self {
        CoreError::Invalid {
            path: path.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
