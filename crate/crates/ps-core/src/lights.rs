use crate::error::{CoreError, CoreResult};
use crate::real::Real;
use crate::vec3::Vec3;

/// Calibrated light directions (unit, pointing from surface toward light,
/// upper hemisphere) with per-light intensities: one scalar per light, or one
/// per channel for RGB captures.
#[derive(Clone, Debug, PartialEq)]
pub struct LightSet<T> {
    directions: Vec<Vec3<T>>,
    /// Row-major (light, channel); `channels` is 1 or 3.
    intensities: Vec<T>,
    channels: usize,
}

impl<T: Real> LightSet<T> {
    pub fn new(directions: Vec<Vec3<T>>, intensities: Vec<T>) -> CoreResult<Self> {
        Self::with_channels(directions, intensities, 1)
    }

    pub fn new_rgb(directions: Vec<Vec3<T>>, intensities: Vec<[T; 3]>) -> CoreResult<Self> {
        let flat = intensities.iter().flat_map(|rgb| rgb.iter().copied()).collect();
        Self::with_channels(directions, flat, 3)
    }

    pub fn with_channels(
        directions: Vec<Vec3<T>>,
        intensities: Vec<T>,
        channels: usize,
    ) -> CoreResult<Self> {
        if directions.is_empty() {
            return Err(CoreError::InvalidArgument("light set needs at least one light".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(CoreError::InvalidArgument(format!(
                "light intensities must have 1 or 3 channels, got {channels}"
            )));
        }
        if intensities.len() != directions.len() * channels {
            return Err(CoreError::DimensionMismatch(format!(
                "{} lights x {} channels expects {} intensities, got {}",
                directions.len(),
                channels,
                directions.len() * channels,
                intensities.len()
            )));
        }
        for (j, d) in directions.iter().enumerate() {
            if !d.is_finite() {
                return Err(CoreError::NonFinite("light direction"));
            }
            if !d.is_unit(1e-6) {
                return Err(CoreError::InvalidArgument(format!(
                    "light {} direction not unit (norm {})",
                    j,
                    d.norm()
                )));
            }
            if d.z <= T::zero() {
                return Err(CoreError::LowerHemisphere { index: j, z: d.z.as_f64() });
            }
        }
        for (j, s) in intensities.iter().enumerate() {
            if !(*s > T::zero()) {
                return Err(CoreError::NonPositiveIntensity {
                    index: j / channels,
                    value: s.as_f64(),
                });
            }
        }
        Ok(LightSet { directions, intensities, channels })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.directions.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn direction(&self, j: usize) -> Vec3<T> {
        self.directions[j]
    }

    pub fn directions(&self) -> &[Vec3<T>] {
        &self.directions
    }

    /// Intensity of light `j` for image channel `ch` (shared scalar when the
    /// set is monochrome).
    #[inline]
    pub fn intensity(&self, j: usize, ch: usize) -> T {
        if self.channels == 1 {
            self.intensities[j]
        } else {
            self.intensities[j * self.channels + ch]
        }
    }

    pub fn intensities(&self) -> &[T] {
        &self.intensities
    }

    /// Same directions, all intensities one (the post-normalization state).
    pub fn unit_intensities(&self) -> LightSet<T> {
        LightSet {
            directions: self.directions.clone(),
            intensities: vec![T::one(); self.intensities.len()],
            channels: self.channels,
        }
    }

    /// Keeps the given light indices, in the given order.
    pub fn subset(&self, indices: &[usize]) -> CoreResult<LightSet<T>> {
        let mut directions = Vec::with_capacity(indices.len());
        let mut intensities = Vec::with_capacity(indices.len() * self.channels);
        for &j in indices {
            if j >= self.len() {
                return Err(CoreError::InvalidArgument(format!("light index {j} out of range")));
            }
            directions.push(self.directions[j]);
            for ch in 0..self.channels {
                intensities.push(self.intensities[j * self.channels + ch]);
            }
        }
        LightSet::with_channels(directions, intensities, self.channels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vec3::unit_normalize;

    #[test]
    fn rejects_lower_hemisphere() {
        let d = vec![Vec3::new(0.0f64, 0.0, -1.0)];
        assert!(matches!(
            LightSet::new(d, vec![1.0]),
            Err(CoreError::LowerHemisphere { index: 0, .. })
        ));
    }

    #[test]
    fn rejects_non_positive_intensity() {
        let d = vec![Vec3::new(0.0f64, 0.0, 1.0)];
        assert!(matches!(
            LightSet::new(d, vec![0.0]),
            Err(CoreError::NonPositiveIntensity { index: 0, .. })
        ));
    }

    #[test]
    fn subset_keeps_order() {
        let d = vec![
            unit_normalize(Vec3::new(0.2f64, 0.0, 1.0)),
            unit_normalize(Vec3::new(0.0, 0.3, 1.0)),
            unit_normalize(Vec3::new(-0.2, 0.1, 1.0)),
        ];
        let lights = LightSet::new(d.clone(), vec![1.0, 2.0, 3.0]).unwrap();
        let sub = lights.subset(&[2, 0]).unwrap();
        assert_eq!(sub.direction(0), d[2]);
        assert_eq!(sub.intensity(0, 0), 3.0);
        assert_eq!(sub.direction(1), d[0]);
    }
}
