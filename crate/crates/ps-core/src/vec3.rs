use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{CoreError, CoreResult};
use crate::real::Real;

/// Norm threshold below which a vector is considered degenerate.
pub const NORM_EPS: f64 = 1e-12;

static DEGENERATE_NORMALS: AtomicU64 = AtomicU64::new(0);

/// Number of zero-norm vectors normalized since the last reset.
pub fn degenerate_normal_count() -> u64 {
    DEGENERATE_NORMALS.load(Ordering::Relaxed)
}

pub fn reset_degenerate_normal_count() {
    DEGENERATE_NORMALS.store(0, Ordering::Relaxed);
}

/// 3-vector in the camera frame: x right, y up, z toward the camera.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct Vec3<T> {
    pub x: T,
    pub y: T,
    pub z: T,
}

impl<T: Real> Vec3<T> {
    #[inline]
    pub fn new(x: T, y: T, z: T) -> Self {
        Vec3 { x, y, z }
    }

    #[inline]
    pub fn zero() -> Self {
        Vec3::new(T::zero(), T::zero(), T::zero())
    }

    /// The fixed viewing direction: parallel to the z-axis, toward the camera.
    #[inline]
    pub fn z_axis() -> Self {
        Vec3::new(T::zero(), T::zero(), T::one())
    }

    #[inline]
    pub fn dot(self, other: Self) -> T {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    #[inline]
    pub fn norm(self) -> T {
        self.dot(self).sqrt()
    }

    #[inline]
    pub fn add(self, other: Self) -> Self {
        Vec3::new(self.x + other.x, self.y + other.y, self.z + other.z)
    }

    #[inline]
    pub fn sub(self, other: Self) -> Self {
        Vec3::new(self.x - other.x, self.y - other.y, self.z - other.z)
    }

    #[inline]
    pub fn scale(self, s: T) -> Self {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn is_unit(self, tol: f64) -> bool {
        (self.norm().as_f64() - 1.0).abs() <= tol
    }

    pub fn to_f64(self) -> Vec3<f64> {
        Vec3::new(self.x.as_f64(), self.y.as_f64(), self.z.as_f64())
    }

    pub fn cast<U: Real>(self) -> Vec3<U> {
        Vec3::new(U::of(self.x.as_f64()), U::of(self.y.as_f64()), U::of(self.z.as_f64()))
    }
}

/// Scales a vector to unit length. A vector with norm <= 1e-12 yields the
/// viewing direction (0,0,1) and bumps the degenerate-normal counter.
pub fn unit_normalize<T: Real>(v: Vec3<T>) -> Vec3<T> {
    let n = v.norm();
    if n > T::of(NORM_EPS) {
        v.scale(T::one() / n)
    } else {
        DEGENERATE_NORMALS.fetch_add(1, Ordering::Relaxed);
        Vec3::z_axis()
    }
}

/// Angle between two unit vectors in degrees; dot product clamped to [-1, 1]
/// so exact matches can never round into NaN.
pub fn angular_error<T: Real>(a: Vec3<T>, b: Vec3<T>) -> CoreResult<T> {
    if !a.is_finite() || !b.is_finite() {
        return Err(CoreError::NonFinite("angular_error input"));
    }
    if a == b {
        // a.dot(a) can round below one; identical vectors are exactly 0 apart.
        return Ok(T::zero());
    }
    let d = a.dot(b).max(-T::one()).min(T::one());
    Ok(d.acos() * T::of(180.0 / std::f64::consts::PI))
}
