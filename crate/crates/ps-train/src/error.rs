use thiserror::Error;

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("invalid train config: {0}")]
    Config(String),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("loss is not finite at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Net(#[from] rmaff_net::NetError),

    #[error(transparent)]
    Engine(#[from] nn_engine::EngineError),

    #[error(transparent)]
    Core(#[from] ps_core::CoreError),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type TrainResult<V> = Result<V, TrainError>;
