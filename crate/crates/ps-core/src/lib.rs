//! Shared domain types for the photometric-stereo toolkit: geometric
//! primitives, normal maps, calibrated light sets, image stacks and the
//! deterministic counter-based RNG every other crate builds on.

mod error;
mod lights;
mod normal_map;
mod real;
mod rng;
mod stack;
mod vec3;

pub use error::{CoreError, CoreResult};
pub use lights::LightSet;
pub use normal_map::NormalMap;
pub use real::Real;
pub use rng::Rng;
pub use stack::{normalize_by_intensity, Image, ImageStack};
pub use vec3::{
    angular_error, degenerate_normal_count, reset_degenerate_normal_count, unit_normalize, Vec3,
    NORM_EPS,
};

pub type Vec3f = Vec3<f32>;
pub type Vec3d = Vec3<f64>;
pub type NormalMapF = NormalMap<f32>;
pub type NormalMapD = NormalMap<f64>;
pub type LightSetF = LightSet<f32>;
pub type LightSetD = LightSet<f64>;
pub type ImageStackF = ImageStack<f32>;
pub type ImageStackD = ImageStack<f64>;
