use ps_core::{ImageStack, LightSet, NormalMap, Real, Rng};
use rayon::prelude::*;

use crate::error::{RenderError, RenderResult};
use crate::heightfield::{heightfield_normals, make_heightfield};
use crate::material::MaterialMap;
use crate::scene::SceneSpec;
use crate::shade::shade;

/// Noise stream id; each (scene seed, light index) pair gets its own
/// substream so renders are independent of evaluation order.
const STREAM_NOISE: u64 = 0x4E_4F;

/// Renders one scene under every light, with ground truth.
pub fn render_scene<T: Real>(
    spec: &SceneSpec,
    lights: &LightSet<T>,
) -> RenderResult<(ImageStack<T>, NormalMap<T>)> {
    spec.validate()?;
    let hf = make_heightfield::<T>(spec)?;
    let normals = heightfield_normals(&hf);
    let mat = MaterialMap::from_scene(spec)?;
    let noise_root = Rng::from_seed(spec.seed).split(STREAM_NOISE);
    let images = (0..lights.len())
        .map(|j| {
            let mut rng = noise_root.split(j as u64);
            shade(&normals, &mat, lights.direction(j), lights.intensity(j, 0), &mut rng, spec, &hf)
        })
        .collect::<RenderResult<Vec<_>>>()?;
    let mut mask = vec![false; spec.width * spec.height];
    let b = spec.mask_border;
    for row in b..spec.height - b {
        for col in b..spec.width - b {
            mask[row * spec.width + col] = true;
        }
    }
    let gt = NormalMap::from_parts(
        spec.width,
        spec.height,
        normals.normals().to_vec(),
        mask.clone(),
    )
    .map_err(RenderError::from)?;
    let stack = ImageStack::new(images, lights.clone(), mask)?;
    Ok((stack, gt))
}

/// Renders every scene (in parallel; outputs are a pure function of spec and
/// lights, so scheduling cannot change them).
pub fn render_dataset<T: Real>(
    specs: &[SceneSpec],
    lights: &LightSet<T>,
) -> RenderResult<Vec<(ImageStack<T>, NormalMap<T>)>> {
    if specs.is_empty() {
        return Err(RenderError::InvalidSpec("no scenes to render".into()));
    }
    specs.par_iter().map(|spec| render_scene(spec, lights)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{generate_lights, Bump, MaterialParams, SceneSpec};
    use ps_core::Vec3;

    fn toy_spec(noise_sigma: f64, cast_shadows: bool, spec_strength: f64) -> SceneSpec {
        SceneSpec {
            width: 12,
            height: 10,
            pixel_pitch: 1.0,
            channels: 1,
            bumps: vec![Bump {
                center: [6.0, 5.0],
                amplitude: 2.0,
                radii: [3.0, 4.0],
                rotation: 0.3,
            }],
            base_material: MaterialParams {
                albedo: [0.8, 0.8, 0.8],
                spec_strength,
                shininess: 8.0,
            },
            regions: vec![],
            noise_sigma,
            cast_shadows,
            mask_border: 1,
            seed: 11,
        }
    }

    #[test]
    fn dataset_shape_and_shared_mask() {
        let lights = generate_lights::<f64>(3, 5, [0.5, 0.9]).unwrap();
        let out = render_dataset(&[toy_spec(0.01, true, 0.2)], &lights).unwrap();
        assert_eq!(out.len(), 1);
        let (stack, gt) = &out[0];
        assert_eq!(stack.len(), 3);
        assert_eq!(stack.mask(), gt.mask());
        assert_eq!(gt.masked_in_count(), 8 * 10);
    }

    #[test]
    fn same_seed_renders_bitwise_identical() {
        let lights = generate_lights::<f64>(4, 5, [0.5, 0.9]).unwrap();
        let spec = toy_spec(0.05, true, 0.3);
        let a = render_dataset(&[spec.clone()], &lights).unwrap();
        let b = render_dataset(&[spec], &lights).unwrap();
        assert_eq!(a[0].0, b[0].0);
        assert_eq!(a[0].1, b[0].1);
    }

    #[test]
    fn noiseless_lambertian_matches_imaging_model_pointwise() {
        let lights = generate_lights::<f64>(4, 17, [0.6, 0.95]).unwrap();
        let spec = toy_spec(0.0, false, 0.0);
        let (stack, gt) = render_scene(&spec, &lights).unwrap();
        for j in 0..stack.len() {
            let l = lights.direction(j);
            let img = stack.image(j);
            for row in 0..spec.height {
                for col in 0..spec.width {
                    let n = if gt.masked_in(row, col) {
                        gt.get(row, col)
                    } else {
                        continue;
                    };
                    let expect = 0.8 * n.dot(l).max(0.0);
                    assert!((img.get(row, col, 0) - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn intensities_never_negative_even_with_noise() {
        let lights = generate_lights::<f64>(6, 23, [0.4, 0.9]).unwrap();
        let (stack, _) = render_scene(&toy_spec(0.25, true, 0.5), &lights).unwrap();
        for im in stack.images() {
            assert!(im.data().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn doubling_intensity_doubles_noiseless_image() {
        let dirs = vec![
            ps_core::unit_normalize(Vec3::new(0.4f64, -0.2, 0.8)),
            ps_core::unit_normalize(Vec3::new(-0.3f64, 0.5, 0.7)),
        ];
        let lights1 = ps_core::LightSet::new(dirs.clone(), vec![1.0, 1.0]).unwrap();
        let lights2 = ps_core::LightSet::new(dirs, vec![2.0, 2.0]).unwrap();
        let spec = toy_spec(0.0, true, 0.4);
        let (a, _) = render_scene(&spec, &lights1).unwrap();
        let (b, _) = render_scene(&spec, &lights2).unwrap();
        for j in 0..2 {
            for (x, y) in a.image(j).data().iter().zip(b.image(j).data()) {
                assert_eq!(*y, 2.0 * *x);
            }
        }
    }

    #[test]
    fn shading_is_local_without_cast_shadows() {
        let lights = generate_lights::<f64>(2, 31, [0.5, 0.9]).unwrap();
        let spec = toy_spec(0.0, false, 0.4);
        let (before, _) = render_scene(&spec, &lights).unwrap();
        let mut bumped = spec.clone();
        // A tiny extra bump concentrated at one pixel.
        bumped.bumps.push(Bump {
            center: [3.0, 4.0],
            amplitude: 0.5,
            radii: [0.05, 0.05],
            rotation: 0.0,
        });
        let (after, _) = render_scene(&bumped, &lights).unwrap();
        for j in 0..2 {
            for row in 0..spec.height {
                for col in 0..spec.width {
                    let delta =
                        (after.image(j).get(row, col, 0) - before.image(j).get(row, col, 0)).abs();
                    let far = (row as i64 - 4).abs() > 2 || (col as i64 - 3).abs() > 2;
                    if far {
                        assert!(
                            delta < 1e-9,
                            "pixel ({row},{col}) changed by {delta} outside the stencil"
                        );
                    }
                }
            }
        }
    }
}
