use ps_core::{unit_normalize, Image, NormalMap, Real, Rng, Vec3};

use crate::error::{RenderError, RenderResult};
use crate::heightfield::Heightfield;
use crate::material::MaterialMap;
use crate::scene::SceneSpec;

/// Margin by which an occluder must clear the shadow ray before it blocks
/// the light (scene units).
const SHADOW_EPS: f64 = 1e-6;

/// Discrete march from a surface point toward the light across the
/// heightfield; one-pixel horizontal steps, bilinear elevation samples.
pub fn cast_shadow_visible<T: Real>(
    hf: &Heightfield<T>,
    row: usize,
    col: usize,
    light: Vec3<f64>,
) -> bool {
    let horizontal = (light.x * light.x + light.y * light.y).sqrt();
    if horizontal < 1e-12 {
        return true; // overhead light cannot be occluded by a heightfield
    }
    let pitch = hf.pixel_pitch().as_f64();
    // Per one-pixel step: +x moves along columns, +y climbs rows upward.
    let dc = light.x / horizontal;
    let dr = -light.y / horizontal;
    let dz = light.z / horizontal * pitch;
    let z0 = hf.get(row, col).as_f64();
    let max_z = hf.max_elevation().as_f64();
    let (h, w) = (hf.height() as f64, hf.width() as f64);
    let mut t = 1.0f64;
    loop {
        let fr = row as f64 + dr * t;
        let fc = col as f64 + dc * t;
        if fr < 0.0 || fc < 0.0 || fr > h - 1.0 || fc > w - 1.0 {
            return true;
        }
        let ray_z = z0 + dz * t;
        if ray_z > max_z {
            return true;
        }
        if hf.sample_bilinear(fr, fc).as_f64() > ray_z + SHADOW_EPS {
            return false;
        }
        t += 1.0;
    }
}

/// Renders one image of the scene under a single directional light:
/// I = s * [rho_d * max(n.l, 0) + rho_s * max(n.h, 0)^alpha * 1(n.l > 0)] * vis + noise,
/// clamped at zero. The half vector h uses the fixed view v = (0,0,1).
pub fn shade<T: Real>(
    normals: &NormalMap<T>,
    mat: &MaterialMap<T>,
    light: Vec3<T>,
    intensity: T,
    rng: &mut Rng,
    spec: &SceneSpec,
    hf: &Heightfield<T>,
) -> RenderResult<Image<T>> {
    if !light.is_unit(1e-6) {
        return Err(RenderError::InvalidSpec(format!(
            "light direction not unit (norm {})",
            light.norm()
        )));
    }
    if !(intensity > T::zero()) {
        return Err(RenderError::InvalidSpec("light intensity must be positive".into()));
    }
    let (h, w, c) = (normals.height(), normals.width(), mat.channels());
    if mat.height() != h || mat.width() != w || hf.height() != h || hf.width() != w {
        return Err(RenderError::InvalidSpec(format!(
            "normals {}x{}, material {}x{}, heightfield {}x{} must agree",
            h,
            w,
            mat.height(),
            mat.width(),
            hf.height(),
            hf.width()
        )));
    }
    let half = unit_normalize(light.add(Vec3::z_axis()));
    let light_f64 = light.to_f64();
    let sigma = spec.noise_sigma;
    let mut out = Image::zeros(h, w, c);
    for row in 0..h {
        for col in 0..w {
            let n = normals.get(row, col);
            let ndl = n.dot(light);
            let lit = ndl > T::zero();
            let diffuse_shading = if lit { ndl } else { T::zero() };
            let specular = if lit {
                let ndh = n.dot(half);
                if ndh > T::zero() {
                    let alpha = mat.shininess(row, col);
                    mat.spec_strength(row, col) * T::of(ndh.as_f64().powf(alpha.as_f64()))
                } else {
                    T::zero()
                }
            } else {
                T::zero()
            };
            let vis = if spec.cast_shadows && lit {
                if cast_shadow_visible(hf, row, col, light_f64) {
                    T::one()
                } else {
                    T::zero()
                }
            } else {
                T::one()
            };
            for ch in 0..c {
                let base = intensity * (mat.albedo(row, col, ch) * diffuse_shading + specular) * vis;
                let v = if sigma > 0.0 {
                    let noise = T::of(rng.gaussian_f64() * sigma);
                    (base + noise).max(T::zero())
                } else {
                    base
                };
                out.set(row, col, ch, v);
            }
        }
    }
    Ok(out)
}
