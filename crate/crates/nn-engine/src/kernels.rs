//! Dense compute kernels behind the graph ops. Convolutions go through
//! im2col + GEMM; batch samples are processed in parallel but each output
//! element is written by exactly one task and cross-sample reductions fold
//! serially in index order, so results never depend on scheduling.

use rayon::prelude::*;

use crate::error::{EngineError, EngineResult};
use crate::scalar::{gemm, Scalar};
use crate::tensor::{Shape, Tensor};

/// Fixed sample chunk for weight-gradient partials (determinism requires a
/// constant, not a thread-count-derived value).
const GRAD_CHUNK: usize = 8;

pub struct ConvDims {
    pub ci: usize,
    pub co: usize,
    pub kh: usize,
    pub kw: usize,
    pub ph: usize,
    pub pw: usize,
    pub oh: usize,
    pub ow: usize,
    pub stride: usize,
}

pub fn conv_dims<T: Scalar>(x: Shape, w: Shape, stride: usize) -> EngineResult<ConvDims> {
    let (kh, kw) = (w.h, w.w);
    if kh % 2 == 0 || kw % 2 == 0 {
        return Err(EngineError::InvalidArgument(format!(
            "same padding requires odd kernels, got {kh}x{kw}"
        )));
    }
    if stride != 1 && stride != 2 {
        return Err(EngineError::InvalidArgument(format!("stride must be 1 or 2, got {stride}")));
    }
    if w.c != x.c {
        return Err(EngineError::ShapeMismatch(format!(
            "conv weight expects {} input channels, input has {} (input {}, weight {})",
            w.c, x.c, x, w
        )));
    }
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    if x.h + 2 * ph < kh || x.w + 2 * pw < kw {
        return Err(EngineError::ShapeMismatch(format!("input {x} too small for kernel {kh}x{kw}")));
    }
    let oh = (x.h + 2 * ph - kh) / stride + 1;
    let ow = (x.w + 2 * pw - kw) / stride + 1;
    Ok(ConvDims { ci: x.c, co: w.n, kh, kw, ph, pw, oh, ow, stride })
}

/// Unpacks one sample into a (ci*kh*kw) x (oh*ow) column matrix.
#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(x: &[T], h: usize, w: usize, d: &ConvDims, cols: &mut [T]) {
    let out_plane = d.oh * d.ow;
    debug_assert_eq!(cols.len(), d.ci * d.kh * d.kw * out_plane);
    let mut row = 0usize;
    for ci in 0..d.ci {
        let plane = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let dst = &mut cols[row * out_plane..(row + 1) * out_plane];
                for oy in 0..d.oh {
                    let iy = (oy * d.stride + ky) as isize - d.ph as isize;
                    let seg = &mut dst[oy * d.ow..(oy + 1) * d.ow];
                    if iy < 0 || iy >= h as isize {
                        seg.fill(T::zero());
                        continue;
                    }
                    let src_row = &plane[iy as usize * w..(iy as usize + 1) * w];
                    for (ox, out) in seg.iter_mut().enumerate() {
                        let ix = (ox * d.stride + kx) as isize - d.pw as isize;
                        *out = if ix < 0 || ix >= w as isize {
                            T::zero()
                        } else {
                            src_row[ix as usize]
                        };
                    }
                }
                row += 1;
            }
        }
    }
}

/// Scatter-adds a column matrix back into a sample gradient (transpose of
/// im2col).
fn col2im_add<T: Scalar>(cols: &[T], h: usize, w: usize, d: &ConvDims, dx: &mut [T]) {
    let out_plane = d.oh * d.ow;
    let mut row = 0usize;
    for ci in 0..d.ci {
        let plane = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..d.kh {
            for kx in 0..d.kw {
                let src = &cols[row * out_plane..(row + 1) * out_plane];
                for oy in 0..d.oh {
                    let iy = (oy * d.stride + ky) as isize - d.ph as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let dst_row = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                    for ox in 0..d.ow {
                        let ix = (ox * d.stride + kx) as isize - d.pw as isize;
                        if ix >= 0 && ix < w as isize {
                            dst_row[ix as usize] += src[oy * d.ow + ox];
                        }
                    }
                }
                row += 1;
            }
        }
    }
}

pub fn conv2d_forward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    bias: Option<&Tensor<T>>,
    stride: usize,
) -> EngineResult<Tensor<T>> {
    let d = conv_dims::<T>(x.shape(), w.shape(), stride)?;
    if let Some(b) = bias {
        if b.shape().len() != d.co {
            return Err(EngineError::ShapeMismatch(format!(
                "conv bias has {} values, expected {}",
                b.shape().len(),
                d.co
            )));
        }
    }
    let xs = x.shape();
    let k = d.ci * d.kh * d.kw;
    let out_plane = d.oh * d.ow;
    let mut out = Tensor::zeros(Shape::new(xs.n, d.co, d.oh, d.ow));
    let in_plane = xs.c * xs.h * xs.w;
    let x_data = x.data();
    let w_data = w.data();
    out.data_mut()
        .par_chunks_mut(d.co * out_plane)
        .enumerate()
        .for_each(|(s, out_sample)| {
            let mut cols = vec![T::zero(); k * out_plane];
            im2col(&x_data[s * in_plane..(s + 1) * in_plane], xs.h, xs.w, &d, &mut cols);
            gemm(d.co, k, out_plane, T::one(), w_data, false, &cols, false, T::zero(), out_sample);
            if let Some(b) = bias {
                for co in 0..d.co {
                    let bv = b.data()[co];
                    for v in &mut out_sample[co * out_plane..(co + 1) * out_plane] {
                        *v += bv;
                    }
                }
            }
        });
    Ok(out)
}

pub struct ConvGrads<T> {
    pub dx: Option<Tensor<T>>,
    pub dw: Tensor<T>,
    pub db: Option<Tensor<T>>,
}

pub fn conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
    stride: usize,
    need_dx: bool,
    need_db: bool,
    bias_shape: Option<Shape>,
) -> EngineResult<ConvGrads<T>> {
    let d = conv_dims::<T>(x.shape(), w.shape(), stride)?;
    let xs = x.shape();
    let k = d.ci * d.kh * d.kw;
    let out_plane = d.oh * d.ow;
    let in_plane = xs.c * xs.h * xs.w;
    let x_data = x.data();
    let w_data = w.data();
    let dy_data = dy.data();

    let dx = if need_dx {
        let mut dx = Tensor::zeros(xs);
        dx.data_mut()
            .par_chunks_mut(in_plane)
            .enumerate()
            .for_each(|(s, dx_sample)| {
                let mut dcols = vec![T::zero(); k * out_plane];
                gemm(
                    k,
                    d.co,
                    out_plane,
                    T::one(),
                    w_data,
                    true,
                    &dy_data[s * d.co * out_plane..(s + 1) * d.co * out_plane],
                    false,
                    T::zero(),
                    &mut dcols,
                );
                col2im_add(&dcols, xs.h, xs.w, &d, dx_sample);
            });
        Some(dx)
    } else {
        None
    };

    // Weight gradient: per-chunk partials computed in parallel, folded
    // serially in chunk order.
    let sample_ids: Vec<usize> = (0..xs.n).collect();
    let partials: Vec<Vec<T>> = sample_ids
        .par_chunks(GRAD_CHUNK)
        .map(|chunk| {
            let mut dw_part = vec![T::zero(); d.co * k];
            let mut cols = vec![T::zero(); k * out_plane];
            for &s in chunk {
                im2col(&x_data[s * in_plane..(s + 1) * in_plane], xs.h, xs.w, &d, &mut cols);
                gemm(
                    d.co,
                    out_plane,
                    k,
                    T::one(),
                    &dy_data[s * d.co * out_plane..(s + 1) * d.co * out_plane],
                    false,
                    &cols,
                    true,
                    T::one(),
                    &mut dw_part,
                );
            }
            dw_part
        })
        .collect();
    let mut dw = Tensor::zeros(w.shape());
    for part in partials {
        for (a, b) in dw.data_mut().iter_mut().zip(&part) {
            *a += *b;
        }
    }

    let db = if need_db {
        let shape = bias_shape.unwrap_or(Shape::new(1, d.co, 1, 1));
        let mut db = Tensor::zeros(shape);
        for s in 0..xs.n {
            for co in 0..d.co {
                let seg = &dy_data[(s * d.co + co) * out_plane..(s * d.co + co + 1) * out_plane];
                let mut acc = T::zero();
                for v in seg {
                    acc += *v;
                }
                db.data_mut()[co] += acc;
            }
        }
        Some(db)
    } else {
        None
    };

    Ok(ConvGrads { dx, dw, db })
}

/// Per-output-row lookup for bilinear x2 upsampling: (lo, hi, frac).
pub fn up2_table(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    (0..dst)
        .map(|i| {
            let s = (i as f64 + 0.5) / 2.0 - 0.5;
            if s <= 0.0 {
                (0, 0, 0.0)
            } else {
                let lo = s.floor() as usize;
                let hi = (lo + 1).min(src - 1);
                (lo.min(src - 1), hi, s - lo as f64)
            }
        })
        .collect()
}
