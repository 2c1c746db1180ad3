use ps_core::{Image, ImageStack, NormalMap, Real, Rng};

use crate::config::TrainConfig;
use crate::error::{TrainError, TrainResult};

pub type Scene<T> = (ImageStack<T>, NormalMap<T>);

/// One training sample: a patch crop of a scene under a random light subset.
pub type Batch<T> = Vec<Scene<T>>;

fn crop_image<T: Real>(im: &Image<T>, row0: usize, col0: usize, size: usize) -> Image<T> {
    let mut out = Image::zeros(size, size, im.channels());
    for y in 0..size {
        for x in 0..size {
            for c in 0..im.channels() {
                out.set(y, x, c, im.get(row0 + y, col0 + x, c));
            }
        }
    }
    out
}

fn crop_scene<T: Real>(
    scene: &Scene<T>,
    row0: usize,
    col0: usize,
    size: usize,
    light_subset: &[usize],
) -> TrainResult<Scene<T>> {
    let (stack, gt) = scene;
    let lights = stack.lights().subset(light_subset)?;
    let images: Vec<Image<T>> = light_subset
        .iter()
        .map(|&j| crop_image(stack.image(j), row0, col0, size))
        .collect();
    let mut mask = Vec::with_capacity(size * size);
    let mut normals = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            mask.push(stack.masked_in(row0 + y, col0 + x) && gt.masked_in(row0 + y, col0 + x));
            normals.push(gt.get(row0 + y, col0 + x));
        }
    }
    let stack = ImageStack::new(images, lights, mask.clone())?;
    let gt = NormalMap::from_parts(size, size, normals, mask)?;
    Ok((stack, gt))
}

/// Uniform scene choice, random patch placement, random light subset without
/// replacement; deterministic given the rng stream. Scenes with fewer lights
/// than `lights_per_sample` contribute all of theirs.
pub fn make_batch<T: Real>(
    scenes: &[Scene<T>],
    rng: &mut Rng,
    cfg: &TrainConfig,
) -> TrainResult<Batch<T>> {
    if scenes.is_empty() {
        return Err(TrainError::Dataset("empty training set".into()));
    }
    let mut out = Vec::with_capacity(cfg.batch_size);
    for _ in 0..cfg.batch_size {
        let scene = &scenes[rng.below(scenes.len())];
        let (stack, _) = scene;
        if stack.height() < cfg.patch || stack.width() < cfg.patch {
            return Err(TrainError::Dataset(format!(
                "scene {}x{} smaller than patch {}",
                stack.height(),
                stack.width(),
                cfg.patch
            )));
        }
        let row0 = rng.below(stack.height() - cfg.patch + 1);
        let col0 = rng.below(stack.width() - cfg.patch + 1);
        let k = cfg.lights_per_sample.min(stack.len());
        if k < cfg.lights_per_sample {
            log::warn!(
                "scene has {} lights, fewer than lights_per_sample={}; using all",
                stack.len(),
                cfg.lights_per_sample
            );
        }
        let subset = rng.choose_k(stack.len(), k);
        out.push(crop_scene(scene, row0, col0, cfg.patch, &subset)?);
    }
    Ok(out)
}
