use ps_core::{unit_normalize, NormalMap, Real, Vec3};

use crate::error::{RenderError, RenderResult};
use crate::scene::SceneSpec;

/// Elevation grid z(col, row) in scene units. Row 0 is the top of the image;
/// world axes are x right, y up, z toward the camera.
#[derive(Clone, Debug, PartialEq)]
pub struct Heightfield<T> {
    width: usize,
    height: usize,
    z: Vec<T>,
    pixel_pitch: T,
}

impl<T: Real> Heightfield<T> {
    pub fn from_parts(width: usize, height: usize, z: Vec<T>, pixel_pitch: T) -> RenderResult<Self> {
        if z.len() != width * height {
            return Err(RenderError::InvalidSpec(format!(
                "heightfield {}x{} expects {} samples, got {}",
                width,
                height,
                width * height,
                z.len()
            )));
        }
        if !(pixel_pitch > T::zero()) {
            return Err(RenderError::InvalidSpec("pixel_pitch must be positive".into()));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(RenderError::InvalidSpec("heightfield contains non-finite samples".into()));
        }
        Ok(Heightfield { width, height, z, pixel_pitch })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn pixel_pitch(&self) -> T {
        self.pixel_pitch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> T {
        self.z[row * self.width + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: T) {
        self.z[row * self.width + col] = v;
    }

    pub fn samples(&self) -> &[T] {
        &self.z
    }

    pub fn max_elevation(&self) -> T {
        self.z.iter().fold(self.z[0], |acc, &v| if v > acc { v } else { acc })
    }

    /// Bilinear elevation at fractional grid coordinates, clamped to the rim.
    pub fn sample_bilinear(&self, row: f64, col: f64) -> T {
        let r = row.clamp(0.0, (self.height - 1) as f64);
        let c = col.clamp(0.0, (self.width - 1) as f64);
        let r0 = r.floor() as usize;
        let c0 = c.floor() as usize;
        let r1 = (r0 + 1).min(self.height - 1);
        let c1 = (c0 + 1).min(self.width - 1);
        let fr = T::of(r - r0 as f64);
        let fc = T::of(c - c0 as f64);
        let one = T::one();
        let top = self.get(r0, c0) * (one - fc) + self.get(r0, c1) * fc;
        let bottom = self.get(r1, c0) * (one - fc) + self.get(r1, c1) * fc;
        top * (one - fr) + bottom * fr
    }
}

fn bump_value(spec: &SceneSpec, bump_idx: usize, col: f64, row: f64) -> f64 {
    let b = &spec.bumps[bump_idx];
    let dx = col - b.center[0];
    let dy = row - b.center[1];
    let (sin, cos) = b.rotation.sin_cos();
    let u = cos * dx + sin * dy;
    let v = -sin * dx + cos * dy;
    let q = 0.5 * ((u / b.radii[0]).powi(2) + (v / b.radii[1]).powi(2));
    b.amplitude * (-q).exp()
}

/// Sum of rotated anisotropic Gaussian bumps evaluated at pixel centers.
pub fn make_heightfield<T: Real>(spec: &SceneSpec) -> RenderResult<Heightfield<T>> {
    spec.validate()?;
    let mut z = Vec::with_capacity(spec.width * spec.height);
    for row in 0..spec.height {
        for col in 0..spec.width {
            let mut acc = 0.0f64;
            for k in 0..spec.bumps.len() {
                acc += bump_value(spec, k, col as f64, row as f64);
            }
            z.push(T::of(acc));
        }
    }
    Heightfield::from_parts(spec.width, spec.height, z, T::of(spec.pixel_pitch))
}

/// Ground-truth normals from central differences (one-sided at the rim):
/// n = unit(-dz/dx, -dz/dy, 1) in the camera frame (y up, so row partials
/// flip sign).
pub fn heightfield_normals<T: Real>(hf: &Heightfield<T>) -> NormalMap<T> {
    let (w, h) = (hf.width(), hf.height());
    let pitch = hf.pixel_pitch();
    let two = T::of(2.0);
    let mut normals = Vec::with_capacity(w * h);
    for row in 0..h {
        for col in 0..w {
            let dz_dx = if w == 1 {
                T::zero()
            } else if col == 0 {
                (hf.get(row, 1) - hf.get(row, 0)) / pitch
            } else if col == w - 1 {
                (hf.get(row, w - 1) - hf.get(row, w - 2)) / pitch
            } else {
                (hf.get(row, col + 1) - hf.get(row, col - 1)) / (two * pitch)
            };
            // World y points up while rows grow downward.
            let dz_dy = if h == 1 {
                T::zero()
            } else if row == 0 {
                (hf.get(0, col) - hf.get(1, col)) / pitch
            } else if row == h - 1 {
                (hf.get(h - 2, col) - hf.get(h - 1, col)) / pitch
            } else {
                (hf.get(row - 1, col) - hf.get(row + 1, col)) / (two * pitch)
            };
            normals.push(unit_normalize(Vec3::new(-dz_dx, -dz_dy, T::one())));
        }
    }
    NormalMap::from_parts(w, h, normals, vec![true; w * h]).expect("dimensions are consistent")
}
