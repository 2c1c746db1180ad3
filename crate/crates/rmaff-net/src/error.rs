use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("network config error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error(transparent)]
    Engine(#[from] nn_engine::EngineError),

    #[error(transparent)]
    Core(#[from] ps_core::CoreError),
}

pub type NetResult<V> = Result<V, NetError>;
