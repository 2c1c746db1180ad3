use ps_core::{Image, Real};

use crate::error::{RenderError, RenderResult};
use crate::scene::SceneSpec;

/// Per-pixel Lambertian + Blinn-Phong parameters rasterized from a scene
/// spec: region overrides are painted over the base material in order.
#[derive(Clone, Debug, PartialEq)]
pub struct MaterialMap<T> {
    height: usize,
    width: usize,
    /// h x w x c diffuse albedo in [0, 1].
    albedo: Image<T>,
    spec_strength: Vec<T>,
    shininess: Vec<T>,
}

impl<T: Real> MaterialMap<T> {
    pub fn from_scene(spec: &SceneSpec) -> RenderResult<Self> {
        spec.validate()?;
        let (h, w, c) = (spec.height, spec.width, spec.channels);
        let mut albedo = Image::zeros(h, w, c);
        let mut spec_strength = vec![T::zero(); h * w];
        let mut shininess = vec![T::one(); h * w];
        for row in 0..h {
            for col in 0..w {
                let mut m = &spec.base_material;
                for region in &spec.regions {
                    if region.shape.contains(col as f64, row as f64) {
                        m = &region.material;
                    }
                }
                for ch in 0..c {
                    albedo.set(row, col, ch, T::of(m.albedo[ch]));
                }
                spec_strength[row * w + col] = T::of(m.spec_strength);
                shininess[row * w + col] = T::of(m.shininess);
            }
        }
        Ok(MaterialMap { height: h, width: w, albedo, spec_strength, shininess })
    }

    pub fn lambertian(height: usize, width: usize, channels: usize, albedo: T) -> RenderResult<Self> {
        if !(albedo >= T::zero() && albedo <= T::one()) {
            return Err(RenderError::InvalidSpec("albedo outside [0,1]".into()));
        }
        let mut image = Image::zeros(height, width, channels);
        image.data_mut().fill(albedo);
        Ok(MaterialMap {
            height,
            width,
            albedo: image,
            spec_strength: vec![T::zero(); height * width],
            shininess: vec![T::one(); height * width],
        })
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.albedo.channels()
    }

    #[inline]
    pub fn albedo(&self, row: usize, col: usize, ch: usize) -> T {
        self.albedo.get(row, col, ch)
    }

    #[inline]
    pub fn spec_strength(&self, row: usize, col: usize) -> T {
        self.spec_strength[row * self.width + col]
    }

    #[inline]
    pub fn shininess(&self, row: usize, col: usize) -> T {
        self.shininess[row * self.width + col]
    }
}
