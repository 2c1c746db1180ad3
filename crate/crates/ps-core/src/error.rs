use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("light {index}: non-positive intensity {value}")]
    NonPositiveIntensity { index: usize, value: f64 },

    #[error("light {index}: direction must point into the upper hemisphere (z > 0), got z = {z}")]
    LowerHemisphere { index: usize, z: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type CoreResult<V> = Result<V, CoreError>;
