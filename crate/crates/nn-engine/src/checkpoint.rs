//! Flat parameter container: a binary blob of little-endian values plus a
//! text manifest of (name, shape, offset, bytes, checksum). Round-trips are
//! bit-exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{EngineError, EngineResult};
use crate::params::ParamStore;
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

const MAGIC: &str = "ps-checkpoint v1";

pub fn save_params<T: Scalar>(
    bin_path: &Path,
    manifest_path: &Path,
    entries: &[(String, &Tensor<T>)],
) -> EngineResult<()> {
    let mut blob: Vec<u8> = Vec::new();
    let mut manifest = String::new();
    manifest.push_str(MAGIC);
    manifest.push('\n');
    manifest.push_str(&format!("dtype {}\n", T::DTYPE));
    manifest.push_str(&format!("count {}\n", entries.len()));
    for (name, tensor) in entries {
        if name.contains(['\t', '\n']) {
            return Err(EngineError::Checkpoint(format!("parameter name {name:?} has separators")));
        }
        let offset = blob.len();
        for v in tensor.data() {
            v.write_le(&mut blob);
        }
        let bytes = blob.len() - offset;
        let digest = Sha256::digest(&blob[offset..]);
        let s = tensor.shape();
        manifest.push_str(&format!(
            "{name}\t{},{},{},{}\t{offset}\t{bytes}\tsha256:{:x}\n",
            s.n, s.c, s.h, s.w, digest
        ));
    }
    let mut f = fs::File::create(bin_path)?;
    f.write_all(&blob)?;
    fs::write(manifest_path, manifest)?;
    Ok(())
}

pub fn load_params<T: Scalar>(
    bin_path: &Path,
    manifest_path: &Path,
) -> EngineResult<Vec<(String, Tensor<T>)>> {
    let blob = fs::read(bin_path)?;
    let manifest = fs::read_to_string(manifest_path)?;
    let mut lines = manifest.lines();
    if lines.next() != Some(MAGIC) {
        return Err(EngineError::Checkpoint(format!(
            "{} is not a parameter manifest",
            manifest_path.display()
        )));
    }
    let dtype_line = lines
        .next()
        .ok_or_else(|| EngineError::Checkpoint("manifest truncated at dtype".into()))?;
    let dtype = dtype_line.strip_prefix("dtype ").ok_or_else(|| {
        EngineError::Checkpoint(format!("bad dtype line {dtype_line:?}"))
    })?;
    if dtype != T::DTYPE {
        return Err(EngineError::Checkpoint(format!(
            "checkpoint stores {dtype} values but {} was requested",
            T::DTYPE
        )));
    }
    let count_line = lines
        .next()
        .ok_or_else(|| EngineError::Checkpoint("manifest truncated at count".into()))?;
    let count: usize = count_line
        .strip_prefix("count ")
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| EngineError::Checkpoint(format!("bad count line {count_line:?}")))?;

    let mut out = Vec::with_capacity(count);
    for line in lines.take(count) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 5 {
            return Err(EngineError::Checkpoint(format!("bad manifest line {line:?}")));
        }
        let name = fields[0].to_string();
        let dims: Vec<usize> = fields[1]
            .split(',')
            .map(|d| d.parse::<usize>())
            .collect::<Result<_, _>>()
            .map_err(|_| EngineError::Checkpoint(format!("bad shape in {line:?}")))?;
        if dims.len() != 4 {
            return Err(EngineError::Checkpoint(format!("shape must be rank 4 in {line:?}")));
        }
        let shape = Shape::new(dims[0], dims[1], dims[2], dims[3]);
        let offset: usize = fields[2]
            .parse()
            .map_err(|_| EngineError::Checkpoint(format!("bad offset in {line:?}")))?;
        let bytes: usize = fields[3]
            .parse()
            .map_err(|_| EngineError::Checkpoint(format!("bad byte count in {line:?}")))?;
        if bytes != shape.len() * T::BYTE_WIDTH || offset + bytes > blob.len() {
            return Err(EngineError::Checkpoint(format!(
                "{name}: {bytes} bytes at {offset} inconsistent with shape {shape} / blob {}",
                blob.len()
            )));
        }
        let segment = &blob[offset..offset + bytes];
        let digest = format!("sha256:{:x}", Sha256::digest(segment));
        if digest != fields[4] {
            return Err(EngineError::Checkpoint(format!("{name}: checksum mismatch")));
        }
        let data: Vec<T> =
            segment.chunks_exact(T::BYTE_WIDTH).map(|c| T::read_le(c)).collect();
        out.push((name, Tensor::from_vec(shape, data)?));
    }
    if out.len() != count {
        return Err(EngineError::Checkpoint(format!(
            "manifest promises {count} arrays, found {}",
            out.len()
        )));
    }
    Ok(out)
}

/// Saves every entry of the store, in insertion order.
pub fn save_store<T: Scalar>(
    bin_path: &Path,
    manifest_path: &Path,
    store: &ParamStore<T>,
) -> EngineResult<()> {
    let entries: Vec<(String, &Tensor<T>)> =
        store.iter().map(|(_, e)| (e.name.clone(), &e.value)).collect();
    save_params(bin_path, manifest_path, &entries)
}

/// Loads values into an existing store by name; shapes must match and every
/// stored name must resolve.
pub fn load_into_store<T: Scalar>(
    bin_path: &Path,
    manifest_path: &Path,
    store: &mut ParamStore<T>,
) -> EngineResult<()> {
    store.load_values(load_params(bin_path, manifest_path)?)
}
