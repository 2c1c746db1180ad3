use crate::error::{CoreError, CoreResult};
use crate::real::Real;
use crate::vec3::Vec3;

/// Per-pixel unit normals plus a validity mask. Masked-out pixels hold the
/// (0,0,0) sentinel and never participate in metrics or losses.
#[derive(Clone, Debug, PartialEq)]
pub struct NormalMap<T> {
    width: usize,
    height: usize,
    normals: Vec<Vec3<T>>,
    mask: Vec<bool>,
}

impl<T: Real> NormalMap<T> {
    pub fn from_parts(
        width: usize,
        height: usize,
        mut normals: Vec<Vec3<T>>,
        mask: Vec<bool>,
    ) -> CoreResult<Self> {
        if width == 0 || height == 0 {
            return Err(CoreError::InvalidArgument("normal map dimensions must be positive".into()));
        }
        if normals.len() != width * height || mask.len() != width * height {
            return Err(CoreError::DimensionMismatch(format!(
                "normal map {}x{} expects {} entries, got {} normals / {} mask",
                width,
                height,
                width * height,
                normals.len(),
                mask.len()
            )));
        }
        for (n, &m) in normals.iter_mut().zip(&mask) {
            if !m {
                *n = Vec3::zero();
            }
        }
        Ok(NormalMap { width, height, normals, mask })
    }

    pub fn filled(width: usize, height: usize, normal: Vec3<T>) -> Self {
        NormalMap {
            width,
            height,
            normals: vec![normal; width * height],
            mask: vec![true; width * height],
        }
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
    pub fn idx(&self, row: usize, col: usize) -> usize {
        row * self.width + col
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> Vec3<T> {
        self.normals[self.idx(row, col)]
    }

    #[inline]
    pub fn masked_in(&self, row: usize, col: usize) -> bool {
        self.mask[self.idx(row, col)]
    }

    pub fn set(&mut self, row: usize, col: usize, n: Vec3<T>, masked_in: bool) {
        let i = self.idx(row, col);
        self.mask[i] = masked_in;
        self.normals[i] = if masked_in { n } else { Vec3::zero() };
    }

    pub fn normals(&self) -> &[Vec3<T>] {
        &self.normals
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn masked_in_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }

    /// (linear index, normal) over masked-in pixels.
    pub fn iter_masked(&self) -> impl Iterator<Item = (usize, Vec3<T>)> + '_ {
        self.normals
            .iter()
            .zip(&self.mask)
            .enumerate()
            .filter_map(|(i, (n, &m))| if m { Some((i, *n)) } else { None })
    }

    /// Checks the unit-norm invariant on masked-in pixels.
    pub fn validate_units(&self, tol: f64) -> CoreResult<()> {
        for (i, n) in self.iter_masked() {
            if !n.is_finite() {
                return Err(CoreError::NonFinite("normal map entry"));
            }
            if !n.is_unit(tol) {
                return Err(CoreError::InvalidArgument(format!(
                    "normal at linear index {} has norm {}",
                    i,
                    n.norm()
                )));
            }
        }
        Ok(())
    }

    pub fn cast<U: Real>(&self) -> NormalMap<U> {
        NormalMap {
            width: self.width,
            height: self.height,
            normals: self.normals.iter().map(|n| n.cast()).collect(),
            mask: self.mask.clone(),
        }
    }
}
