use ps_core::CoreError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RenderError {
    #[error("invalid scene spec: {0}")]
    InvalidSpec(String),

    #[error(transparent)]
    Core(#[from] CoreError),
}

pub type RenderResult<V> = Result<V, RenderError>;
