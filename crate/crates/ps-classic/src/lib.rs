//! Calibrated Lambertian least-squares photometric stereo: per pixel,
//! normals and albedo from the normal equations of I = rho * L n, with
//! shadow thresholding and a conditioning guard. The toolkit's classical
//! baseline and correctness anchor.

mod sym3;

use ps_core::{unit_normalize, Image, ImageStack, NormalMap, Real, Vec3};
use rayon::prelude::*;
use thiserror::Error;

pub use sym3::{sym3_condition, sym3_solve};

#[derive(Debug, Error)]
pub enum ClassicError {
    #[error("least squares needs at least 3 lights, got {0}")]
    TooFewLights(usize),

    #[error("invalid options: {0}")]
    InvalidOptions(String),

    #[error(transparent)]
    Core(#[from] ps_core::CoreError),
}

#[derive(Clone, Debug)]
pub struct L2Options<T> {
    /// Observations below this fraction of the stack's maximum intensity are
    /// treated as shadowed and dropped per pixel. Zero keeps everything.
    pub shadow_threshold: T,
    /// Minimum retained observations for a pixel to be solved (>= 3).
    pub min_lights: usize,
    /// Normal-equation matrices with a condition number above this are
    /// rejected as degenerate.
    pub max_condition: T,
}

impl<T: Real> Default for L2Options<T> {
    fn default() -> Self {
        L2Options { shadow_threshold: T::of(0.02), min_lights: 3, max_condition: T::of(1e8) }
    }
}

impl<T: Real> L2Options<T> {
    fn validate(&self) -> Result<(), ClassicError> {
        if self.min_lights < 3 {
            return Err(ClassicError::InvalidOptions(format!(
                "min_lights must be >= 3 (normal has 3 unknowns), got {}",
                self.min_lights
            )));
        }
        if !(self.shadow_threshold >= T::zero()) {
            return Err(ClassicError::InvalidOptions("shadow_threshold must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct L2Solution<T> {
    pub normals: NormalMap<T>,
    /// h x w x 1 map of ||g|| (Lambertian albedo); zero where unsolved.
    pub albedo: Image<T>,
    /// Masked-in pixels rejected for too few lights or poor conditioning.
    pub rejected_pixels: usize,
}

/// Pure-algebra core: least-squares g from retained (direction, intensity)
/// observations, already thresholded. Returns None when the system is
/// under-determined or ill-conditioned.
pub fn solve_pixel<T: Real>(
    lights: &[Vec3<T>],
    intensities: &[T],
    max_condition: T,
) -> Option<(Vec3<T>, T)> {
    debug_assert_eq!(lights.len(), intensities.len());
    if lights.len() < 3 {
        return None;
    }
    // Normal equations: M = L^T L (symmetric 3x3), r = L^T b.
    let mut m = [T::zero(); 6]; // xx, xy, xz, yy, yz, zz
    let mut r = [T::zero(); 3];
    for (l, &b) in lights.iter().zip(intensities) {
        m[0] += l.x * l.x;
        m[1] += l.x * l.y;
        m[2] += l.x * l.z;
        m[3] += l.y * l.y;
        m[4] += l.y * l.z;
        m[5] += l.z * l.z;
        r[0] += l.x * b;
        r[1] += l.y * b;
        r[2] += l.z * b;
    }
    let cond = sym3_condition(&m)?;
    if cond > max_condition {
        return None;
    }
    let g = sym3_solve(&m, &r)?;
    let g = Vec3::new(g[0], g[1], g[2]);
    let albedo = g.norm();
    Some((unit_normalize(g), albedo))
}

/// Woodham-style solve over every masked-in pixel of an intensity-normalized
/// stack. Pixels that keep fewer than `min_lights` observations after shadow
/// thresholding, or whose light matrix is rank-deficient, are masked out of
/// the result and counted.
pub fn l2_solve<T: Real>(
    stack: &ImageStack<T>,
    opts: &L2Options<T>,
) -> Result<L2Solution<T>, ClassicError> {
    opts.validate()?;
    let m = stack.len();
    if m < 3 {
        return Err(ClassicError::TooFewLights(m));
    }
    let (h, w, c) = (stack.height(), stack.width(), stack.channels());
    let cutoff = opts.shadow_threshold * stack.max_intensity();
    let lights = stack.lights();
    let inv_c = T::one() / T::of(c as f64);

    // Canonical observation order: sorted by light direction, intensity and
    // measurement, so jointly permuted stacks solve bitwise identically.
    let order_key = |l: Vec3<T>, s: T, b: T| [l.x.as_f64(), l.y.as_f64(), l.z.as_f64(), s.as_f64(), b.as_f64()];

    let rows: Vec<(Vec<Vec3<T>>, Vec<T>, Vec<bool>)> = (0..h)
        .into_par_iter()
        .map(|row| {
            let mut normals_row = vec![Vec3::zero(); w];
            let mut albedo_row = vec![T::zero(); w];
            let mut solved_row = vec![false; w];
            let mut obs: Vec<(Vec3<T>, T, T)> = Vec::with_capacity(m);
            for col in 0..w {
                if !stack.masked_in(row, col) {
                    continue;
                }
                obs.clear();
                for j in 0..m {
                    let mut b = T::zero();
                    for ch in 0..c {
                        b += stack.image(j).get(row, col, ch);
                    }
                    b = b * inv_c;
                    if b >= cutoff {
                        obs.push((lights.direction(j), lights.intensity(j, 0), b));
                    }
                }
                if obs.len() < opts.min_lights {
                    continue;
                }
                obs.sort_by(|a, b| {
                    order_key(a.0, a.1, a.2)
                        .partial_cmp(&order_key(b.0, b.1, b.2))
                        .expect("finite observation keys")
                });
                let dirs: Vec<Vec3<T>> = obs.iter().map(|o| o.0).collect();
                let vals: Vec<T> = obs.iter().map(|o| o.2).collect();
                if let Some((n, a)) = solve_pixel(&dirs, &vals, opts.max_condition) {
                    normals_row[col] = n;
                    albedo_row[col] = a;
                    solved_row[col] = true;
                }
            }
            (normals_row, albedo_row, solved_row)
        })
        .collect();

    let mut normals = Vec::with_capacity(h * w);
    let mut albedo = Image::zeros(h, w, 1);
    let mut mask = Vec::with_capacity(h * w);
    let mut rejected = 0usize;
    for (row, (normals_row, albedo_row, solved_row)) in rows.into_iter().enumerate() {
        for col in 0..w {
            let masked_in = stack.masked_in(row, col);
            let solved = solved_row[col];
            if masked_in && !solved {
                rejected += 1;
            }
            normals.push(normals_row[col]);
            albedo.set(row, col, 0, albedo_row[col]);
            mask.push(masked_in && solved);
        }
    }
    let normals = NormalMap::from_parts(w, h, normals, mask)?;
    Ok(L2Solution { normals, albedo, rejected_pixels: rejected })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_light_matrix_recovers_g() {
        // Pure-algebra check with the axis basis; only e3 is a valid scene
        // light, so this bypasses the hemisphere-checked stack path.
        let lights = vec![
            Vec3::new(1.0f64, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.0, 0.0, 1.0),
        ];
        let (n, albedo) = solve_pixel(&lights, &[0.6, 0.0, 0.8], 1e8).unwrap();
        assert!((n.x - 0.6).abs() < 1e-12);
        assert!((n.y - 0.0).abs() < 1e-12);
        assert!((n.z - 0.8).abs() < 1e-12);
        assert!((albedo - 1.0).abs() < 1e-12);
    }

    #[test]
    fn coplanar_lights_rejected_by_condition_check() {
        let lights = vec![
            Vec3::new(1.0f64, 0.0, 0.0),
            Vec3::new(0.0, 1.0, 0.0),
            Vec3::new(0.7071067811865476, 0.7071067811865476, 0.0),
        ];
        assert!(solve_pixel(&lights, &[0.5, 0.5, 0.7], 1e8).is_none());
    }

    #[test]
    fn min_lights_below_three_rejected() {
        let opts = L2Options::<f64> { min_lights: 2, ..Default::default() };
        assert!(opts.validate().is_err());
    }
}
