use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the denoising pipeline.
#[derive(Debug, Error)]
pub enum DsganError {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("index {index} out of range for table with {len} rows")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("parameter set mismatch: {0}")]
    ParamMismatch(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("corrupt checkpoint: {0}")]
    Checkpoint(String),

    #[error("pretraining target {target:.3} not reached after {epochs} epochs (best {best:.4})")]
    TargetNotReached { target: f64, best: f64, epochs: usize },

    #[error("ground-truth flags missing: {0}")]
    MissingTruth(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl DsganError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DsganError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 2 for config/input problems, 3 for runtime or
    /// data-corruption failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            DsganError::Config(_)
            | DsganError::Input(_)
            | DsganError::Parse { .. }
            | DsganError::MissingTruth(_) => 2,
            DsganError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => 2,
            _ => 3,
        }
    }
}

pub type Result<T, E = DsganError> = std::result::Result<T, E>;
