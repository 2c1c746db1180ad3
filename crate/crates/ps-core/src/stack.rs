use crate::error::{CoreError, CoreResult};
use crate::lights::LightSet;
use crate::real::Real;

/// Dense h x w x c image, channel-interleaved rows (HWC), values >= 0.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Image { height, width, channels, data: vec![T::zero(); height * width * channels] }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<T>) -> CoreResult<Self> {
        if data.len() != height * width * channels {
            return Err(CoreError::DimensionMismatch(format!(
                "image {}x{}x{} expects {} values, got {}",
                height,
                width,
                channels,
                height * width * channels,
                data.len()
            )));
        }
        Ok(Image { height, width, channels, data })
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
        self.channels
    }

    #[inline]
    pub fn idx(&self, row: usize, col: usize, ch: usize) -> usize {
        (row * self.width + col) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> T {
        self.data[self.idx(row, col, ch)]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, v: T) {
        let i = self.idx(row, col, ch);
        self.data[i] = v;
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn max_value(&self) -> T {
        self.data.iter().fold(T::zero(), |acc, &v| if v > acc { v } else { acc })
    }

    pub fn cast<U: Real>(&self) -> Image<U> {
        Image {
            height: self.height,
            width: self.width,
            channels: self.channels,
            data: self.data.iter().map(|v| U::of(v.as_f64())).collect(),
        }
    }
}

/// m images of one scene sharing a light set, mask and resolution.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageStack<T> {
    images: Vec<Image<T>>,
    lights: LightSet<T>,
    mask: Vec<bool>,
    height: usize,
    width: usize,
}

impl<T: Real> ImageStack<T> {
    pub fn new(images: Vec<Image<T>>, lights: LightSet<T>, mask: Vec<bool>) -> CoreResult<Self> {
        if images.is_empty() {
            return Err(CoreError::InvalidArgument("image stack needs at least one image".into()));
        }
        if images.len() != lights.len() {
            return Err(CoreError::DimensionMismatch(format!(
                "{} images vs {} lights",
                images.len(),
                lights.len()
            )));
        }
        let (h, w, c) = (images[0].height(), images[0].width(), images[0].channels());
        for (j, im) in images.iter().enumerate() {
            if im.height() != h || im.width() != w || im.channels() != c {
                return Err(CoreError::DimensionMismatch(format!(
                    "image {} is {}x{}x{}, expected {}x{}x{}",
                    j,
                    im.height(),
                    im.width(),
                    im.channels(),
                    h,
                    w,
                    c
                )));
            }
            if im.data().iter().any(|v| !v.is_finite() || *v < T::zero()) {
                return Err(CoreError::InvalidArgument(format!(
                    "image {j} contains negative or non-finite intensities"
                )));
            }
        }
        if lights.channels() != 1 && lights.channels() != c {
            return Err(CoreError::DimensionMismatch(format!(
                "light intensities have {} channels but images have {}",
                lights.channels(),
                c
            )));
        }
        if mask.len() != h * w {
            return Err(CoreError::DimensionMismatch(format!(
                "mask has {} entries, expected {}",
                mask.len(),
                h * w
            )));
        }
        Ok(ImageStack { images, lights, mask, height: h, width: w })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.images.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
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
        self.images[0].channels()
    }

    pub fn image(&self, j: usize) -> &Image<T> {
        &self.images[j]
    }

    pub fn images(&self) -> &[Image<T>] {
        &self.images
    }

    pub fn lights(&self) -> &LightSet<T> {
        &self.lights
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    #[inline]
    pub fn masked_in(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.width + col]
    }

    /// Reorders the (image, light) pairs jointly.
    pub fn permuted(&self, order: &[usize]) -> CoreResult<ImageStack<T>> {
        let images = order
            .iter()
            .map(|&j| {
                self.images
                    .get(j)
                    .cloned()
                    .ok_or_else(|| CoreError::InvalidArgument(format!("image index {j} out of range")))
            })
            .collect::<CoreResult<Vec<_>>>()?;
        let lights = self.lights.subset(order)?;
        ImageStack::new(images, lights, self.mask.clone())
    }

    pub fn max_intensity(&self) -> T {
        self.images.iter().fold(T::zero(), |acc, im| {
            let m = im.max_value();
            if m > acc {
                m
            } else {
                acc
            }
        })
    }
}

/// Divides image j by its light intensity s_j (per channel for RGB light
/// sets); the returned stack's light intensities are all one.
pub fn normalize_by_intensity<T: Real>(stack: &ImageStack<T>) -> CoreResult<ImageStack<T>> {
    let lights = stack.lights();
    for j in 0..lights.len() {
        for ch in 0..lights.channels() {
            let s = lights.intensity(j, ch);
            if !(s > T::zero()) {
                return Err(CoreError::NonPositiveIntensity { index: j, value: s.as_f64() });
            }
        }
    }
    let channels = stack.channels();
    let images = stack
        .images()
        .iter()
        .enumerate()
        .map(|(j, im)| {
            let mut out = im.clone();
            for row in 0..im.height() {
                for col in 0..im.width() {
                    for ch in 0..channels {
                        let s = lights.intensity(j, ch);
                        let i = out.idx(row, col, ch);
                        out.data_mut()[i] = im.get(row, col, ch) / s;
                    }
                }
            }
            out
        })
        .collect();
    ImageStack::new(images, lights.unit_intensities(), stack.mask().to_vec())
}
