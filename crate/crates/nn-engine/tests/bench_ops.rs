//! Op-level timing probes.
//! cargo test -p nn-engine --test bench_ops -- --ignored --nocapture

use nn_engine::{Graph, Shape, Tensor};
use ps_core::Rng;

fn t(shape: Shape, rng: &mut Rng) -> Tensor<f32> {
    Tensor::from_fn(shape, |_| rng.gaussian_f64() as f32)
}

#[test]
#[ignore]
fn time_core_ops() {
    let mut rng = Rng::from_seed(0);
    let reps = 50;

    // conv 3x3, 32->32 channels, batch 8 at 32x32 (the shallow workhorse).
    let x = t(Shape::new(8, 32, 32, 32), &mut rng);
    let w = t(Shape::new(32, 32, 3, 3), &mut rng);
    let t0 = std::time::Instant::now();
    for _ in 0..reps {
        let mut g = Graph::new();
        let xid = g.leaf(x.clone(), false);
        let wid = g.leaf(w.clone(), false);
        let _ = g.conv2d(xid, wid, None, 1).unwrap();
    }
    let per = t0.elapsed().as_secs_f64() / reps as f64;
    let flops = 2.0 * 8.0 * 32.0 * 32.0 * 1024.0 * 9.0 * 32.0;
    eprintln!("conv3x3 32->32 b8 32x32: {:.3} ms ({:.1} GFLOP/s)", per * 1e3, flops / per / 1e9);

    // conv 1x1, 32->16, batch 8 at 32x32.
    let w11 = t(Shape::new(16, 32, 1, 1), &mut rng);
    let t0 = std::time::Instant::now();
    for _ in 0..reps {
        let mut g = Graph::new();
        let xid = g.leaf(x.clone(), false);
        let wid = g.leaf(w11.clone(), false);
        let _ = g.conv2d(xid, wid, None, 1).unwrap();
    }
    let per = t0.elapsed().as_secs_f64() / reps as f64;
    let flops = 2.0 * 8.0 * 32.0 * 1024.0 * 16.0 * 32.0;
    eprintln!("conv1x1 32->16 b8 32x32: {:.3} ms ({:.1} GFLOP/s)", per * 1e3, flops / per / 1e9);

    // conv 1x3, 16->16.
    let x16 = t(Shape::new(8, 16, 32, 32), &mut rng);
    let w13 = t(Shape::new(16, 16, 1, 3), &mut rng);
    let t0 = std::time::Instant::now();
    for _ in 0..reps {
        let mut g = Graph::new();
        let xid = g.leaf(x16.clone(), false);
        let wid = g.leaf(w13.clone(), false);
        let _ = g.conv2d(xid, wid, None, 1).unwrap();
    }
    let per = t0.elapsed().as_secs_f64() / reps as f64;
    eprintln!("conv1x3 16->16 b8 32x32: {:.3} ms", per * 1e3);

    // batchnorm train on (8, 32, 32, 32).
    let gamma = Tensor::filled(Shape::new(1, 32, 1, 1), 1.0f32);
    let beta = Tensor::zeros(Shape::new(1, 32, 1, 1));
    let t0 = std::time::Instant::now();
    for _ in 0..reps {
        let mut g = Graph::new();
        let xid = g.leaf(x.clone(), false);
        let gid = g.leaf(gamma.clone(), false);
        let bid = g.leaf(beta.clone(), false);
        let _ = g.batch_norm_train(xid, gid, bid, 1e-5).unwrap();
    }
    eprintln!("bn train b8 32ch 32x32: {:.3} ms", t0.elapsed().as_secs_f64() / reps as f64 * 1e3);

    // leaky relu.
    let t0 = std::time::Instant::now();
    for _ in 0..reps {
        let mut g = Graph::new();
        let xid = g.leaf(x.clone(), false);
        let _ = g.leaky_relu(xid, 0.1f32);
    }
    eprintln!("lrelu b8 32ch 32x32: {:.3} ms", t0.elapsed().as_secs_f64() / reps as f64 * 1e3);

    // leaf clone cost itself.
    let t0 = std::time::Instant::now();
    for _ in 0..reps {
        let mut g = Graph::new();
        let _ = g.leaf(x.clone(), false);
    }
    eprintln!("leaf clone 1MB: {:.3} ms", t0.elapsed().as_secs_f64() / reps as f64 * 1e3);
}
