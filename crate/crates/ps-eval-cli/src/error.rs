use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{0}")]
    Validation(String),

    #[error("{0}")]
    Runtime(String),
}

impl EvalError {
    pub fn validation(msg: impl Into<String>) -> Self {
        EvalError::Validation(msg.into())
    }

    pub fn runtime(msg: impl Into<String>) -> Self {
        EvalError::Runtime(msg.into())
    }

    /// Process exit code: 1 for validation errors, 2 for runtime failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            EvalError::Validation(_) => 1,
            EvalError::Runtime(_) => 2,
        }
    }
}

impl From<std::io::Error> for EvalError {
    fn from(e: std::io::Error) -> Self {
        EvalError::Runtime(format!("io: {e}"))
    }
}

impl From<ps_core::CoreError> for EvalError {
    fn from(e: ps_core::CoreError) -> Self {
        EvalError::Validation(e.to_string())
    }
}

impl From<ps_render::RenderError> for EvalError {
    fn from(e: ps_render::RenderError) -> Self {
        EvalError::Validation(e.to_string())
    }
}

impl From<ps_classic::ClassicError> for EvalError {
    fn from(e: ps_classic::ClassicError) -> Self {
        EvalError::Validation(e.to_string())
    }
}

impl From<rmaff_net::NetError> for EvalError {
    fn from(e: rmaff_net::NetError) -> Self {
        EvalError::Validation(e.to_string())
    }
}

impl From<nn_engine::EngineError> for EvalError {
    fn from(e: nn_engine::EngineError) -> Self {
        match e {
            nn_engine::EngineError::Io(io) => EvalError::Runtime(format!("io: {io}")),
            other => EvalError::Validation(other.to_string()),
        }
    }
}

impl From<ps_train::TrainError> for EvalError {
    fn from(e: ps_train::TrainError) -> Self {
        match e {
            ps_train::TrainError::NanLoss { .. } => EvalError::Runtime(e.to_string()),
            ps_train::TrainError::Io(io) => EvalError::Runtime(format!("io: {io}")),
            other => EvalError::Validation(other.to_string()),
        }
    }
}

impl From<image::ImageError> for EvalError {
    fn from(e: image::ImageError) -> Self {
        EvalError::Validation(format!("image: {e}"))
    }
}

pub type EvalResult<V> = Result<V, EvalError>;
