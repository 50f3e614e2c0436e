use std::path::PathBuf;

use thiserror::Error;
use tkg_tensor::TensorError;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("{path}:{line}: {detail}")]
    Parse {
        path: PathBuf,
        line: usize,
        detail: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("incompatible checkpoint: {0}")]
    Incompatible(String),

    #[error(transparent)]
    Tensor(#[from] TensorError),

    #[error("cannot access {}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }

    /// Coarse failure category, used for process exit codes.
    pub fn category(&self) -> ErrorCategory {
        match self {
            CoreError::Parse { .. } | CoreError::Data(_) | CoreError::Io { .. } => ErrorCategory::Data,
            CoreError::Config(_) => ErrorCategory::Config,
            CoreError::Incompatible(_) => ErrorCategory::Shape,
            CoreError::Tensor(TensorError::Numeric { .. }) => ErrorCategory::Numeric,
            CoreError::Tensor(TensorError::Shape { .. }) => ErrorCategory::Shape,
            CoreError::Tensor(TensorError::Checkpoint(_)) => ErrorCategory::Data,
            CoreError::Tensor(_) => ErrorCategory::Other,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Data,
    Config,
    Shape,
    Numeric,
    Other,
}

pub type Result<T, E = CoreError> = std::result::Result<T, E>;
