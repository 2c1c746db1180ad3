//! On-disk dataset layout: `lights.txt` ("lx ly lz s" per line), `mask.png`,
//! `img_000.png ...` (16-bit gray or RGB), optional `normal_gt.pfm`. A
//! multi-scene root holds one such directory per scene.

use std::fs;
use std::path::{Path, PathBuf};

use ps_core::{normalize_by_intensity, Image, ImageStack, LightSet, NormalMap, Real, Vec3};

use crate::error::{EvalError, EvalResult};
use crate::pfm::{read_pfm_normals, write_pfm_normals};
use crate::png_codec::{load_image_png16, load_mask_png, save_image_png16, save_mask_png};

pub fn save_dataset<T: Real>(
    dir: &Path,
    stack: &ImageStack<T>,
    gt: Option<&NormalMap<T>>,
) -> EvalResult<()> {
    fs::create_dir_all(dir)?;
    let lights = stack.lights();
    let mut text = String::new();
    for j in 0..lights.len() {
        let d = lights.direction(j);
        text.push_str(&format!(
            "{} {} {} {}\n",
            d.x.as_f64(),
            d.y.as_f64(),
            d.z.as_f64(),
            lights.intensity(j, 0).as_f64()
        ));
    }
    fs::write(dir.join("lights.txt"), text)?;
    save_mask_png(&dir.join("mask.png"), stack.mask(), stack.width(), stack.height())?;
    for j in 0..stack.len() {
        save_image_png16(&dir.join(format!("img_{j:03}.png")), stack.image(j))?;
    }
    if let Some(gt) = gt {
        write_pfm_normals(&dir.join("normal_gt.pfm"), gt)?;
    }
    Ok(())
}

fn parse_lights<T: Real>(path: &Path) -> EvalResult<LightSet<T>> {
    let text = fs::read_to_string(path)
        .map_err(|e| EvalError::validation(format!("missing {}: {e}", path.display())))?;
    let mut dirs = Vec::new();
    let mut intensities = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<f64> = line
            .split_whitespace()
            .map(|f| f.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| {
                EvalError::validation(format!(
                    "{} line {}: expected four floats, got {line:?}",
                    path.display(),
                    lineno + 1
                ))
            })?;
        if fields.len() != 4 {
            return Err(EvalError::validation(format!(
                "{} line {}: expected \"lx ly lz s\", got {line:?}",
                path.display(),
                lineno + 1
            )));
        }
        dirs.push(Vec3::new(T::of(fields[0]), T::of(fields[1]), T::of(fields[2])));
        intensities.push(T::of(fields[3]));
    }
    LightSet::new(dirs, intensities).map_err(|e| {
        EvalError::validation(format!("{}: {e}", path.display()))
    })
}

/// Loads the raw stack exactly as stored (no intensity normalization).
pub fn load_dataset_raw<T: Real>(
    dir: &Path,
) -> EvalResult<(ImageStack<T>, Option<NormalMap<T>>)> {
    let lights: LightSet<T> = parse_lights(&dir.join("lights.txt"))?;
    let (mask, mw, mh) = load_mask_png(&dir.join("mask.png"))?;
    let mut images = Vec::with_capacity(lights.len());
    for j in 0..lights.len() {
        let path = dir.join(format!("img_{j:03}.png"));
        let image: Image<T> = load_image_png16(&path)?;
        if image.height() != mh || image.width() != mw {
            return Err(EvalError::validation(format!(
                "{}: image is {}x{} but mask.png is {}x{}",
                path.display(),
                image.width(),
                image.height(),
                mw,
                mh
            )));
        }
        images.push(image);
    }
    let extra = dir.join(format!("img_{:03}.png", lights.len()));
    if extra.exists() {
        return Err(EvalError::validation(format!(
            "{}: more images than lights.txt entries ({} lights)",
            extra.display(),
            lights.len()
        )));
    }
    let stack = ImageStack::new(images, lights, mask)
        .map_err(|e| EvalError::validation(format!("{}: {e}", dir.display())))?;
    let gt_path = dir.join("normal_gt.pfm");
    let gt = if gt_path.exists() { Some(read_pfm_normals(&gt_path)?) } else { None };
    Ok((stack, gt))
}

/// Loads and intensity-normalizes a scene (the solver-facing contract).
pub fn load_dataset<T: Real>(
    dir: &Path,
) -> EvalResult<(ImageStack<T>, Option<NormalMap<T>>)> {
    let (stack, gt) = load_dataset_raw(dir)?;
    Ok((normalize_by_intensity(&stack)?, gt))
}

/// Scene subdirectories of a dataset root, sorted by name.
pub fn scene_dirs(root: &Path) -> EvalResult<Vec<(String, PathBuf)>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(root)
        .map_err(|e| EvalError::validation(format!("read {}: {e}", root.display())))?
    {
        let entry = entry?;
        if entry.path().is_dir() && entry.path().join("lights.txt").exists() {
            out.push((entry.file_name().to_string_lossy().into_owned(), entry.path()));
        }
    }
    if out.is_empty() {
        return Err(EvalError::validation(format!(
            "{}: no scene directories (subdirs with lights.txt)",
            root.display()
        )));
    }
    out.sort();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ps_render::{generate_lights, generate_scene_specs, render_dataset, SceneGen};

    #[test]
    fn round_trip_preserves_lights_bitwise_and_images_to_one_lsb() {
        let gen = SceneGen { noise_sigma: 0.02, ..SceneGen::desk_default(1, 12, 10) };
        let specs = generate_scene_specs(&gen, 21).unwrap();
        let lights = generate_lights::<f64>(4, 9, [0.4, 0.9]).unwrap();
        let mut rendered = render_dataset(&specs, &lights).unwrap();
        let (stack, gt) = rendered.remove(0);
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &stack, Some(&gt)).unwrap();
        let (back, gt_back) = load_dataset_raw::<f64>(dir.path()).unwrap();
        assert_eq!(back.lights(), stack.lights());
        assert_eq!(back.mask(), stack.mask());
        for j in 0..stack.len() {
            for (a, b) in stack.image(j).data().iter().zip(back.image(j).data()) {
                assert!((a.min(1.0) - b).abs() <= 1.0 / 65535.0 + 1e-12);
            }
        }
        let gt_back = gt_back.unwrap();
        for (i, n) in gt.iter_masked() {
            let b = gt_back.get(i / gt.width(), i % gt.width());
            assert!(n.sub(b).norm() < 1e-6);
        }
    }

    #[test]
    fn missing_lights_file_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_dataset::<f64>(dir.path()).unwrap_err();
        assert!(err.to_string().contains("lights.txt"), "got {err}");
    }

    #[test]
    fn all_false_mask_loads() {
        let gen = SceneGen { noise_sigma: 0.0, ..SceneGen::desk_default(1, 8, 8) };
        let specs = generate_scene_specs(&gen, 3).unwrap();
        let lights = generate_lights::<f64>(3, 4, [0.5, 0.9]).unwrap();
        let (stack, _) = render_dataset(&specs, &lights).unwrap().remove(0);
        let all_false =
            ImageStack::new(stack.images().to_vec(), stack.lights().clone(), vec![false; 64])
                .unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &all_false, None).unwrap();
        let (back, gt) = load_dataset::<f64>(dir.path()).unwrap();
        assert!(back.mask().iter().all(|&m| !m));
        assert!(gt.is_none());
    }

    #[test]
    fn hemisphere_violation_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join("lights.txt"), "0 0 -1 1\n").unwrap();
        save_mask_png(&dir.path().join("mask.png"), &[true, true, true, true], 2, 2).unwrap();
        let img = Image::<f64>::zeros(2, 2, 1);
        save_image_png16(&dir.path().join("img_000.png"), &img).unwrap();
        let err = load_dataset::<f64>(dir.path()).unwrap_err();
        assert!(err.to_string().contains("upper hemisphere"), "got {err}");
    }

    #[test]
    fn dimension_mismatch_names_the_file() {
        let gen = SceneGen { noise_sigma: 0.0, ..SceneGen::desk_default(1, 8, 8) };
        let specs = generate_scene_specs(&gen, 3).unwrap();
        let lights = generate_lights::<f64>(2, 4, [0.5, 0.9]).unwrap();
        let (stack, _) = render_dataset(&specs, &lights).unwrap().remove(0);
        let dir = tempfile::tempdir().unwrap();
        save_dataset(dir.path(), &stack, None).unwrap();
        // Overwrite one image with the wrong size.
        let small = Image::<f64>::zeros(4, 4, 1);
        save_image_png16(&dir.path().join("img_001.png"), &small).unwrap();
        let err = load_dataset::<f64>(dir.path()).unwrap_err();
        assert!(err.to_string().contains("img_001.png"), "got {err}");
    }
}
