//! Minimal dense-tensor reverse-mode differentiation engine: exactly the
//! rank-4 layer inventory a small photometric-stereo network needs, each op
//! with an oracle-checked backward pass, plus parameter storage, a bit-exact
//! checkpoint container and a finite-difference gradient checker.

mod checkpoint;
mod error;
mod gradcheck;
mod graph;
mod kernels;
mod layers;
mod params;
mod scalar;
mod tensor;

pub use checkpoint::{load_into_store, load_params, save_params, save_store};
pub use error::{EngineError, EngineResult};
pub use gradcheck::{check_gradients, GradCheckConfig, GradCheckEntry, GradCheckReport};
pub use graph::{Graph, KinkReport, NodeId};
pub use layers::{he_weights, BatchNorm2d, Conv2d, LayerDef, Linear, Mode, Sequential};
pub use params::{ParamEntry, ParamId, ParamStore};
pub use scalar::{gemm, Scalar};
pub use tensor::{Shape, Tensor};

pub type TensorF = Tensor<f32>;
pub type TensorD = Tensor<f64>;
pub type GraphF = Graph<f32>;
pub type GraphD = Graph<f64>;
pub type ParamStoreF = ParamStore<f32>;
pub type ParamStoreD = ParamStore<f64>;
