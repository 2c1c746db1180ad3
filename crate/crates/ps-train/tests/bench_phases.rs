//! Phase timing probe. cargo test -p ps-train --test bench_phases -- --ignored --nocapture

use nn_engine::{Graph, Mode, ParamStore};
use ps_core::Rng;
use ps_render::{generate_lights, generate_scene_specs, render_dataset, SceneGen};
use ps_train::{make_batch, TrainConfig};
use rmaff_net::{NetworkConfig, RmaffPsn};

#[test]
#[ignore]
fn time_micro_batch_phases() {
    let gen = SceneGen::desk_default(2, 64, 64);
    let specs = generate_scene_specs(&gen, 1).unwrap();
    let lights = generate_lights::<f32>(32, 2, [0.4, 0.95]).unwrap();
    let scenes = render_dataset(&specs, &lights).unwrap();
    let cfg = TrainConfig::default();
    let mut store = ParamStore::<f32>::new();
    let net =
        RmaffPsn::new(&mut store, &NetworkConfig::default(), 1, &mut Rng::from_seed(0)).unwrap();
    let mut rng = Rng::from_seed(1);
    let batch = make_batch(&scenes, &mut rng, &cfg).unwrap();
    let micro = &batch[0..8];
    let m = micro[0].0.len();

    for round in 0..2 {
        let t0 = std::time::Instant::now();
        let mut g = Graph::new();
        let mut inputs = Vec::new();
        for j in 0..m {
            let pairs: Vec<_> = micro
                .iter()
                .map(|(stack, _)| (stack.image(j), stack.lights().direction(j)))
                .collect();
            let x = rmaff_net::assemble_inputs(&pairs).unwrap();
            inputs.push(g.leaf(x, false));
        }
        let t_assemble = t0.elapsed();

        let t1 = std::time::Instant::now();
        let mut feats = Vec::new();
        for &x in &inputs {
            feats.push(net.extractor.forward(&mut g, &mut store, x, Mode::Train).unwrap());
        }
        let t_extract = t1.elapsed();

        let t2 = std::time::Instant::now();
        let fused = rmaff_net::fuse_maxpool(&mut g, &feats).unwrap();
        let pred = net.regressor.forward(&mut g, &mut store, fused, Mode::Train).unwrap();
        let t_regress = t2.elapsed();

        let t3 = std::time::Instant::now();
        let mut gt_rng = Rng::from_seed(2);
        let w = nn_engine::Tensor::from_fn(g.shape(pred), |_| gt_rng.gaussian_f64() as f32);
        let wid = g.leaf(w, false);
        let p = g.mul(pred, wid).unwrap();
        let loss = g.sum_all(p);
        g.backward(loss).unwrap();
        g.collect_param_grads(&mut store);
        let t_backward = t3.elapsed();

        eprintln!(
            "round {round}: assemble {:.2}s extract {:.2}s ({} nodes) regress {:.2}s backward {:.2}s total {:.2}s",
            t_assemble.as_secs_f64(),
            t_extract.as_secs_f64(),
            g.len(),
            t_regress.as_secs_f64(),
            t_backward.as_secs_f64(),
            t0.elapsed().as_secs_f64()
        );
    }
}
