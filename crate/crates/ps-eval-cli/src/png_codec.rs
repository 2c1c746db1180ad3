//! 16-bit PNG codecs: intensity images (gray or RGB, [0,1] scaled), the
//! normal-map encoding channel = round((v+1)/2 * 65535) with (0,0,0)
//! reserved for masked-out pixels, and 8-bit masks.

use std::path::Path;

use image::{GrayImage, ImageBuffer, Luma, Rgb};
use ps_core::{unit_normalize, Image as PsImage, NormalMap, Real, Vec3};

use crate::error::{EvalError, EvalResult};

pub fn save_normal_png<T: Real>(path: &Path, map: &NormalMap<T>) -> EvalResult<()> {
    let (w, h) = (map.width(), map.height());
    let mut img: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::new(w as u32, h as u32);
    for row in 0..h {
        for col in 0..w {
            let px = if map.masked_in(row, col) {
                let n = map.get(row, col);
                let enc = |v: T| ((v.as_f64() + 1.0) / 2.0 * 65535.0).round() as u16;
                Rgb([enc(n.x), enc(n.y), enc(n.z)])
            } else {
                Rgb([0, 0, 0])
            };
            img.put_pixel(col as u32, row as u32, px);
        }
    }
    img.save(path).map_err(|e| EvalError::runtime(format!("write {}: {e}", path.display())))?;
    Ok(())
}

pub fn load_normal_png<T: Real>(path: &Path) -> EvalResult<NormalMap<T>> {
    let img = image::open(path)
        .map_err(|e| EvalError::validation(format!("open {}: {e}", path.display())))?
        .into_rgb16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mut normals = vec![Vec3::zero(); w * h];
    let mut mask = vec![false; w * h];
    for row in 0..h {
        for col in 0..w {
            let Rgb([r, g, b]) = *img.get_pixel(col as u32, row as u32);
            if r == 0 && g == 0 && b == 0 {
                continue;
            }
            let dec = |u: u16| T::of(2.0 * u as f64 / 65535.0 - 1.0);
            normals[row * w + col] = unit_normalize(Vec3::new(dec(r), dec(g), dec(b)));
            mask[row * w + col] = true;
        }
    }
    Ok(NormalMap::from_parts(w, h, normals, mask)?)
}

pub fn save_image_png16<T: Real>(path: &Path, image: &PsImage<T>) -> EvalResult<()> {
    let (w, h) = (image.width(), image.height());
    let quant = |v: T| (v.as_f64().clamp(0.0, 1.0) * 65535.0).round() as u16;
    let err = |e: image::ImageError| EvalError::runtime(format!("write {}: {e}", path.display()));
    match image.channels() {
        1 => {
            let mut img: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::new(w as u32, h as u32);
            for row in 0..h {
                for col in 0..w {
                    img.put_pixel(col as u32, row as u32, Luma([quant(image.get(row, col, 0))]));
                }
            }
            img.save(path).map_err(err)?;
        }
        3 => {
            let mut img: ImageBuffer<Rgb<u16>, Vec<u16>> = ImageBuffer::new(w as u32, h as u32);
            for row in 0..h {
                for col in 0..w {
                    img.put_pixel(
                        col as u32,
                        row as u32,
                        Rgb([
                            quant(image.get(row, col, 0)),
                            quant(image.get(row, col, 1)),
                            quant(image.get(row, col, 2)),
                        ]),
                    );
                }
            }
            img.save(path).map_err(err)?;
        }
        c => return Err(EvalError::validation(format!("cannot save {c}-channel image"))),
    }
    Ok(())
}

pub fn load_image_png16<T: Real>(path: &Path) -> EvalResult<PsImage<T>> {
    let dynimg = image::open(path)
        .map_err(|e| EvalError::validation(format!("open {}: {e}", path.display())))?;
    let scale = |u: u16| T::of(u as f64 / 65535.0);
    match dynimg.color().channel_count() {
        1 => {
            let img = dynimg.into_luma16();
            let (w, h) = (img.width() as usize, img.height() as usize);
            let mut out = PsImage::zeros(h, w, 1);
            for row in 0..h {
                for col in 0..w {
                    out.set(row, col, 0, scale(img.get_pixel(col as u32, row as u32)[0]));
                }
            }
            Ok(out)
        }
        _ => {
            let img = dynimg.into_rgb16();
            let (w, h) = (img.width() as usize, img.height() as usize);
            let mut out = PsImage::zeros(h, w, 3);
            for row in 0..h {
                for col in 0..w {
                    let Rgb([r, g, b]) = *img.get_pixel(col as u32, row as u32);
                    out.set(row, col, 0, scale(r));
                    out.set(row, col, 1, scale(g));
                    out.set(row, col, 2, scale(b));
                }
            }
            Ok(out)
        }
    }
}

pub fn save_mask_png(path: &Path, mask: &[bool], width: usize, height: usize) -> EvalResult<()> {
    let mut img = GrayImage::new(width as u32, height as u32);
    for row in 0..height {
        for col in 0..width {
            let v = if mask[row * width + col] { 255 } else { 0 };
            img.put_pixel(col as u32, row as u32, Luma([v]));
        }
    }
    img.save(path).map_err(|e| EvalError::runtime(format!("write {}: {e}", path.display())))?;
    Ok(())
}

pub fn load_mask_png(path: &Path) -> EvalResult<(Vec<bool>, usize, usize)> {
    let img = image::open(path)
        .map_err(|e| EvalError::validation(format!("open {}: {e}", path.display())))?
        .into_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let mask = img.pixels().map(|p| p[0] != 0).collect();
    Ok((mask, w, h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ps_core::Rng;

    #[test]
    fn normal_codec_pins_formula() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.png");
        let mut map = NormalMap::filled(2, 1, Vec3::new(0.0f64, 0.0, 1.0));
        map.set(0, 1, Vec3::new(-1.0, 0.0, 0.0), true);
        save_normal_png(&path, &map).unwrap();
        let img = image::open(&path).unwrap().into_rgb16();
        assert_eq!(img.get_pixel(0, 0).0, [32768, 32768, 65535]);
        assert_eq!(img.get_pixel(1, 0).0, [0, 32768, 32768]);
    }

    #[test]
    fn normal_codec_round_trip_under_a_hundredth_degree() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.png");
        let mut rng = Rng::from_seed(12);
        let mut map = NormalMap::filled(16, 16, Vec3::new(0.0f64, 0.0, 1.0));
        for row in 0..16 {
            for col in 0..16 {
                let n = unit_normalize(Vec3::new(
                    rng.gaussian_f64(),
                    rng.gaussian_f64(),
                    rng.gaussian_f64(),
                ));
                map.set(row, col, n, true);
            }
        }
        save_normal_png(&path, &map).unwrap();
        let back: NormalMap<f64> = load_normal_png(&path).unwrap();
        let mut worst = 0.0f64;
        for (i, n) in map.iter_masked() {
            let b = back.get(i / 16, i % 16);
            worst = worst.max(ps_core::angular_error(n, b).unwrap());
        }
        assert!(worst < 0.01, "worst angular deviation {worst} deg");
    }

    #[test]
    fn masked_out_encodes_zero_and_survives() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("n.png");
        let mut map = NormalMap::filled(2, 2, Vec3::new(0.0f64, 0.0, 1.0));
        map.set(1, 0, Vec3::zero(), false);
        save_normal_png(&path, &map).unwrap();
        let back: NormalMap<f64> = load_normal_png(&path).unwrap();
        assert!(!back.masked_in(1, 0));
        assert!(back.masked_in(0, 0));
    }

    #[test]
    fn image_round_trip_within_one_lsb() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("img.png");
        let mut rng = Rng::from_seed(5);
        let mut img = PsImage::<f64>::zeros(7, 9, 1);
        for row in 0..7 {
            for col in 0..9 {
                img.set(row, col, 0, rng.uniform_f64());
            }
        }
        save_image_png16(&path, &img).unwrap();
        let back: PsImage<f64> = load_image_png16(&path).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 1.0 / 65535.0 + 1e-12);
        }
    }
}
