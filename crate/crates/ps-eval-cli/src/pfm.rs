//! Portable float map codec for normal ground truth: 3-channel "PF",
//! little-endian (scale header -1.0), rows bottom to top. Masked-out pixels
//! store the (0,0,0) sentinel.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use ps_core::{unit_normalize, NormalMap, Real, Vec3};

use crate::error::{EvalError, EvalResult};

pub fn write_pfm_normals<T: Real>(path: &Path, map: &NormalMap<T>) -> EvalResult<()> {
    let (w, h) = (map.width(), map.height());
    let mut f = fs::File::create(path)
        .map_err(|e| EvalError::runtime(format!("create {}: {e}", path.display())))?;
    write!(f, "PF\n{w} {h}\n-1.0\n")?;
    let mut buf = Vec::with_capacity(w * h * 12);
    for row in (0..h).rev() {
        for col in 0..w {
            let n = map.get(row, col);
            for v in [n.x, n.y, n.z] {
                buf.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
            }
        }
    }
    f.write_all(&buf)?;
    Ok(())
}

pub fn read_pfm_normals<T: Real>(path: &Path) -> EvalResult<NormalMap<T>> {
    let mut data = Vec::new();
    fs::File::open(path)
        .map_err(|e| EvalError::validation(format!("open {}: {e}", path.display())))?
        .read_to_end(&mut data)?;
    // Header is three newline-terminated fields.
    let mut pos = 0usize;
    let mut next_line = || -> EvalResult<String> {
        let start = pos;
        while pos < data.len() && data[pos] != b'\n' {
            pos += 1;
        }
        if pos >= data.len() {
            return Err(EvalError::validation(format!("{}: truncated header", path.display())));
        }
        let line = String::from_utf8_lossy(&data[start..pos]).into_owned();
        pos += 1;
        Ok(line)
    };
    let magic = next_line()?;
    if magic.trim() != "PF" {
        return Err(EvalError::validation(format!(
            "{}: not a 3-channel PFM (magic {magic:?})",
            path.display()
        )));
    }
    let dims = next_line()?;
    let mut it = dims.split_whitespace();
    let (w, h): (usize, usize) = match (it.next(), it.next()) {
        (Some(a), Some(b)) => (
            a.parse().map_err(|_| EvalError::validation(format!("bad width {a:?}")))?,
            b.parse().map_err(|_| EvalError::validation(format!("bad height {b:?}")))?,
        ),
        _ => return Err(EvalError::validation(format!("{}: bad dimensions", path.display()))),
    };
    let scale: f64 = next_line()?
        .trim()
        .parse()
        .map_err(|_| EvalError::validation(format!("{}: bad scale", path.display())))?;
    if scale >= 0.0 {
        return Err(EvalError::validation(format!(
            "{}: big-endian PFM unsupported (scale {scale})",
            path.display()
        )));
    }
    let body = &data[pos..];
    if body.len() != w * h * 12 {
        return Err(EvalError::validation(format!(
            "{}: body holds {} bytes, expected {}",
            path.display(),
            body.len(),
            w * h * 12
        )));
    }
    let mut normals = vec![Vec3::zero(); w * h];
    let mut mask = vec![false; w * h];
    for (bottom_row, chunk) in body.chunks_exact(w * 12).enumerate() {
        let row = h - 1 - bottom_row;
        for col in 0..w {
            let at = |k: usize| {
                f32::from_le_bytes(chunk[col * 12 + 4 * k..col * 12 + 4 * k + 4].try_into().unwrap())
            };
            let v = Vec3::new(
                T::of(at(0) as f64),
                T::of(at(1) as f64),
                T::of(at(2) as f64),
            );
            if v.norm().as_f64() > 0.5 {
                normals[row * w + col] = unit_normalize(v);
                mask[row * w + col] = true;
            }
        }
    }
    Ok(NormalMap::from_parts(w, h, normals, mask)?)
}
