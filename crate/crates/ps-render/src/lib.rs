//! Synthetic photometric-stereo scene generator: Gaussian-bump heightfields,
//! spatially varying Lambertian + Blinn-Phong materials, directional
//! lighting with attached and cast shadows, and exact ground-truth normals.

mod dataset;
mod error;
mod heightfield;
mod material;
mod scene;
mod shade;

pub use dataset::{render_dataset, render_scene};
pub use error::{RenderError, RenderResult};
pub use heightfield::{heightfield_normals, make_heightfield, Heightfield};
pub use material::MaterialMap;
pub use scene::{
    generate_lights, generate_scene_specs, Bump, MaterialParams, MaterialRegion, RegionShape,
    SceneGen, SceneSpec,
};
pub use shade::{cast_shadow_visible, shade};

pub type HeightfieldF = Heightfield<f32>;
pub type HeightfieldD = Heightfield<f64>;
pub type MaterialMapF = MaterialMap<f32>;
pub type MaterialMapD = MaterialMap<f64>;
