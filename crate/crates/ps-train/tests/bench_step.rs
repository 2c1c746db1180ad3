//! Manual sizing probe: wall time of one default-config training step.
//! cargo test -p ps-train --test bench_step -- --ignored --nocapture

use nn_engine::ParamStore;
use ps_core::Rng;
use ps_render::{generate_lights, generate_scene_specs, render_dataset, SceneGen};
use ps_train::{make_batch, train_step, Adam, TrainConfig};
use rmaff_net::{NetworkConfig, RmaffPsn};

#[test]
#[ignore]
fn time_one_default_step() {
    let gen = SceneGen::desk_default(4, 64, 64);
    let specs = generate_scene_specs(&gen, 1).unwrap();
    let lights = generate_lights::<f32>(32, 2, [0.4, 0.95]).unwrap();
    let scenes = render_dataset(&specs, &lights).unwrap();
    let cfg = TrainConfig::default();
    let mut store = ParamStore::<f32>::new();
    let net = RmaffPsn::new(&mut store, &NetworkConfig::default(), 1, &mut Rng::from_seed(0)).unwrap();
    let mut rng = Rng::from_seed(1);
    let mut adam = Adam::new(&store, &cfg);
    // Warm-up + timed steps.
    for i in 0..3 {
        let batch = make_batch(&scenes, &mut rng, &cfg).unwrap();
        let t0 = std::time::Instant::now();
        let loss = train_step(&net, &mut store, &batch, &cfg).unwrap();
        adam.step(&mut store, 0.001);
        eprintln!("step {i}: {:.2}s loss {loss:.4}", t0.elapsed().as_secs_f64());
    }
}
