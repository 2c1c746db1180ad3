use thiserror::Error;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("backward on a detached tensor (leaf without requires_grad)")]
    DetachedBackward,

    #[error("backward needs a scalar loss, got shape {0}")]
    NotScalarLoss(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl EngineError {
    /// Prefixes layer context onto shape/argument errors.
    pub fn in_layer(self, name: &str) -> Self {
        match self {
            EngineError::ShapeMismatch(m) => EngineError::ShapeMismatch(format!("{name}: {m}")),
            EngineError::InvalidArgument(m) => EngineError::InvalidArgument(format!("{name}: {m}")),
            other => other,
        }
    }
}

pub type EngineResult<V> = Result<V, EngineError>;
