use ps_core::{unit_normalize, LightSet, Rng, Vec3};
use serde::{Deserialize, Serialize};

use crate::error::{RenderError, RenderResult};

/// Gaussian elevation bump. Centers and radii are in grid (pixel) units,
/// amplitude in scene units; rotation spins the anisotropic axes.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Bump {
    /// (col, row) of the peak.
    pub center: [f64; 2],
    pub amplitude: f64,
    /// Gaussian standard deviations along the rotated axes.
    pub radii: [f64; 2],
    /// Rotation of the axes in radians.
    #[serde(default)]
    pub rotation: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MaterialParams {
    /// Diffuse albedo per channel, each in [0, 1].
    pub albedo: [f64; 3],
    /// Specular lobe strength, >= 0. Zero means pure Lambertian.
    #[serde(default)]
    pub spec_strength: f64,
    /// Blinn-Phong exponent, >= 1.
    #[serde(default = "default_shininess")]
    pub shininess: f64,
}

fn default_shininess() -> f64 {
    16.0
}

impl Default for MaterialParams {
    fn default() -> Self {
        MaterialParams { albedo: [0.7, 0.7, 0.7], spec_strength: 0.0, shininess: 16.0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegionShape {
    Rect { x0: f64, y0: f64, x1: f64, y1: f64 },
    Disc { center: [f64; 2], radius: f64 },
}

impl RegionShape {
    pub fn contains(&self, col: f64, row: f64) -> bool {
        match *self {
            RegionShape::Rect { x0, y0, x1, y1 } => col >= x0 && col < x1 && row >= y0 && row < y1,
            RegionShape::Disc { center, radius } => {
                let dx = col - center[0];
                let dy = row - center[1];
                dx * dx + dy * dy <= radius * radius
            }
        }
    }
}

/// A material override painted over the base material.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct MaterialRegion {
    pub shape: RegionShape,
    pub material: MaterialParams,
}

/// Full description of one synthetic scene; every render is a pure function
/// of this plus a light set.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default = "default_pitch")]
    pub pixel_pitch: f64,
    /// 1 (grayscale) or 3 (RGB) output channels.
    #[serde(default = "default_channels")]
    pub channels: usize,
    pub bumps: Vec<Bump>,
    #[serde(default)]
    pub base_material: MaterialParams,
    #[serde(default)]
    pub regions: Vec<MaterialRegion>,
    /// Std of additive Gaussian camera noise, in units of full scale.
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    #[serde(default)]
    pub cast_shadows: bool,
    /// Pixels trimmed from each edge of the validity mask.
    #[serde(default = "default_mask_border")]
    pub mask_border: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_pitch() -> f64 {
    1.0
}

fn default_channels() -> usize {
    1
}

fn default_noise_sigma() -> f64 {
    0.01
}

fn default_mask_border() -> usize {
    1
}

impl SceneSpec {
    pub fn validate(&self) -> RenderResult<()> {
        if self.width == 0 || self.height == 0 {
            return Err(RenderError::InvalidSpec("scene dimensions must be positive".into()));
        }
        if self.pixel_pitch <= 0.0 {
            return Err(RenderError::InvalidSpec("pixel_pitch must be positive".into()));
        }
        if self.channels != 1 && self.channels != 3 {
            return Err(RenderError::InvalidSpec(format!(
                "channels must be 1 or 3, got {}",
                self.channels
            )));
        }
        if self.bumps.is_empty() {
            return Err(RenderError::InvalidSpec("scene needs at least one bump".into()));
        }
        for (i, b) in self.bumps.iter().enumerate() {
            if !(b.radii[0] > 0.0 && b.radii[1] > 0.0) {
                return Err(RenderError::InvalidSpec(format!("bump {i} radii must be positive")));
            }
            if !b.amplitude.is_finite() || !b.center.iter().all(|v| v.is_finite()) {
                return Err(RenderError::InvalidSpec(format!("bump {i} has non-finite fields")));
            }
        }
        for (i, m) in
            std::iter::once(&self.base_material).chain(self.regions.iter().map(|r| &r.material)).enumerate()
        {
            if m.albedo.iter().any(|&a| !(0.0..=1.0).contains(&a)) {
                return Err(RenderError::InvalidSpec(format!("material {i}: albedo outside [0,1]")));
            }
            if m.spec_strength < 0.0 {
                return Err(RenderError::InvalidSpec(format!("material {i}: negative spec_strength")));
            }
            if m.shininess < 1.0 {
                return Err(RenderError::InvalidSpec(format!("material {i}: shininess below 1")));
            }
        }
        if self.noise_sigma < 0.0 {
            return Err(RenderError::InvalidSpec("noise_sigma must be >= 0".into()));
        }
        if 2 * self.mask_border >= self.width.min(self.height) {
            return Err(RenderError::InvalidSpec("mask_border leaves no pixels".into()));
        }
        Ok(())
    }
}

/// Parameter ranges for the random scene generator.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SceneGen {
    pub count: usize,
    pub width: usize,
    pub height: usize,
    #[serde(default = "default_channels")]
    pub channels: usize,
    #[serde(default = "default_bump_count")]
    pub bump_count: [usize; 2],
    #[serde(default = "default_amplitude")]
    pub amplitude: [f64; 2],
    #[serde(default = "default_radius")]
    pub radius: [f64; 2],
    #[serde(default = "default_region_count")]
    pub region_count: [usize; 2],
    #[serde(default = "default_albedo")]
    pub albedo: [f64; 2],
    #[serde(default = "default_spec_strength")]
    pub spec_strength: [f64; 2],
    #[serde(default = "default_shininess_range")]
    pub shininess: [f64; 2],
    #[serde(default = "default_noise_sigma")]
    pub noise_sigma: f64,
    #[serde(default = "default_true")]
    pub cast_shadows: bool,
    #[serde(default = "default_mask_border")]
    pub mask_border: usize,
}

fn default_bump_count() -> [usize; 2] {
    [3, 7]
}
fn default_amplitude() -> [f64; 2] {
    [2.0, 8.0]
}
fn default_radius() -> [f64; 2] {
    [5.0, 14.0]
}
fn default_region_count() -> [usize; 2] {
    [1, 3]
}
fn default_albedo() -> [f64; 2] {
    [0.25, 0.95]
}
fn default_spec_strength() -> [f64; 2] {
    [0.0, 0.7]
}
fn default_shininess_range() -> [f64; 2] {
    [4.0, 48.0]
}
fn default_true() -> bool {
    true
}

impl SceneGen {
    pub fn desk_default(count: usize, width: usize, height: usize) -> Self {
        SceneGen {
            count,
            width,
            height,
            channels: 1,
            bump_count: default_bump_count(),
            amplitude: default_amplitude(),
            radius: default_radius(),
            region_count: default_region_count(),
            albedo: default_albedo(),
            spec_strength: default_spec_strength(),
            shininess: default_shininess_range(),
            noise_sigma: default_noise_sigma(),
            cast_shadows: true,
            mask_border: default_mask_border(),
        }
    }
}

const STREAM_SCENE_GEN: u64 = 0x53_43;
const STREAM_LIGHT_GEN: u64 = 0x4C_47;

fn range_usize(rng: &mut Rng, lo: usize, hi: usize) -> usize {
    if hi <= lo {
        lo
    } else {
        lo + rng.below(hi - lo + 1)
    }
}

/// Deterministically expands generator ranges into explicit scene specs.
pub fn generate_scene_specs(gen: &SceneGen, base_seed: u64) -> RenderResult<Vec<SceneSpec>> {
    let root = Rng::from_seed(base_seed).split(STREAM_SCENE_GEN);
    let mut specs = Vec::with_capacity(gen.count);
    for i in 0..gen.count {
        let mut rng = root.split(i as u64);
        let nb = range_usize(&mut rng, gen.bump_count[0], gen.bump_count[1]);
        let margin = 0.12;
        let bumps = (0..nb.max(1))
            .map(|_| {
                let cx = rng.range_f64(margin * gen.width as f64, (1.0 - margin) * gen.width as f64);
                let cy =
                    rng.range_f64(margin * gen.height as f64, (1.0 - margin) * gen.height as f64);
                let amplitude = rng.range_f64(gen.amplitude[0], gen.amplitude[1]);
                let r0 = rng.range_f64(gen.radius[0], gen.radius[1]);
                let r1 = rng.range_f64(gen.radius[0], gen.radius[1]);
                let rotation = rng.range_f64(0.0, std::f64::consts::PI);
                Bump { center: [cx, cy], amplitude, radii: [r0, r1], rotation }
            })
            .collect();
        let draw_material = |rng: &mut Rng| {
            let a = rng.range_f64(gen.albedo[0], gen.albedo[1]);
            MaterialParams {
                albedo: [a, a, a],
                spec_strength: rng.range_f64(gen.spec_strength[0], gen.spec_strength[1]),
                shininess: rng.range_f64(gen.shininess[0], gen.shininess[1]),
            }
        };
        let base_material = draw_material(&mut rng);
        let nr = range_usize(&mut rng, gen.region_count[0], gen.region_count[1]);
        let regions = (0..nr)
            .map(|_| {
                let material = draw_material(&mut rng);
                let shape = if rng.uniform_f64() < 0.5 {
                    let cx = rng.range_f64(0.0, gen.width as f64);
                    let cy = rng.range_f64(0.0, gen.height as f64);
                    let radius = rng.range_f64(0.1 * gen.width as f64, 0.3 * gen.width as f64);
                    RegionShape::Disc { center: [cx, cy], radius }
                } else {
                    let x0 = rng.range_f64(0.0, 0.7 * gen.width as f64);
                    let y0 = rng.range_f64(0.0, 0.7 * gen.height as f64);
                    let x1 = x0 + rng.range_f64(0.15 * gen.width as f64, 0.5 * gen.width as f64);
                    let y1 = y0 + rng.range_f64(0.15 * gen.height as f64, 0.5 * gen.height as f64);
                    RegionShape::Rect { x0, y0, x1, y1 }
                };
                MaterialRegion { shape, material }
            })
            .collect();
        let spec = SceneSpec {
            width: gen.width,
            height: gen.height,
            pixel_pitch: 1.0,
            channels: gen.channels,
            bumps,
            base_material,
            regions,
            noise_sigma: gen.noise_sigma,
            cast_shadows: gen.cast_shadows,
            mask_border: gen.mask_border,
            seed: rng.next_u64(),
        };
        spec.validate()?;
        specs.push(spec);
    }
    Ok(specs)
}

/// Uniform-azimuth upper-hemisphere lights with unit intensity.
pub fn generate_lights<T: ps_core::Real>(
    count: usize,
    seed: u64,
    z_range: [f64; 2],
) -> RenderResult<LightSet<T>> {
    if count == 0 {
        return Err(RenderError::InvalidSpec("light count must be positive".into()));
    }
    if !(z_range[0] > 0.0 && z_range[1] <= 1.0 && z_range[0] <= z_range[1]) {
        return Err(RenderError::InvalidSpec(format!(
            "light z range must satisfy 0 < lo <= hi <= 1, got {z_range:?}"
        )));
    }
    let mut rng = Rng::from_seed(seed).split(STREAM_LIGHT_GEN);
    let mut dirs = Vec::with_capacity(count);
    for _ in 0..count {
        let az = rng.range_f64(0.0, 2.0 * std::f64::consts::PI);
        let z = rng.range_f64(z_range[0], z_range[1]);
        let r = (1.0 - z * z).max(0.0).sqrt();
        let d = unit_normalize(Vec3::new(
            T::of(r * az.cos()),
            T::of(r * az.sin()),
            T::of(z),
        ));
        dirs.push(d);
    }
    let intensities = vec![T::one(); count];
    LightSet::new(dirs, intensities).map_err(RenderError::from)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generator_is_deterministic() {
        let gen = SceneGen::desk_default(3, 32, 32);
        let a = generate_scene_specs(&gen, 9).unwrap();
        let b = generate_scene_specs(&gen, 9).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 3);
    }

    #[test]
    fn generated_lights_are_valid_upper_hemisphere() {
        let lights = generate_lights::<f64>(16, 3, [0.35, 0.95]).unwrap();
        assert_eq!(lights.len(), 16);
        for j in 0..16 {
            assert!(lights.direction(j).z > 0.0);
            assert!(lights.direction(j).is_unit(1e-9));
        }
    }
}
