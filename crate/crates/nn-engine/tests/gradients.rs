use nn_engine::{
    check_gradients, BatchNorm2d, Conv2d, GradCheckConfig, Graph, LayerDef, Linear, Mode,
    ParamStore, Sequential, Shape, Tensor,
};
use ps_core::Rng;

fn random_tensor(shape: Shape, rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gaussian_f64())
}

#[test]
fn grad_of_sum_is_ones() {
    let mut g = Graph::new();
    let x = g.leaf(Tensor::from_vec(Shape::new(2, 1, 2, 2), (0..8).map(|i| i as f64).collect()).unwrap(), true);
    let loss = g.sum_all(x);
    g.backward(loss).unwrap();
    assert!(g.grad(x).unwrap().data().iter().all(|&v| v == 1.0));
}

#[test]
fn grad_of_half_square_sum_is_x() {
    let mut rng = Rng::from_seed(3);
    let xt = random_tensor(Shape::new(1, 2, 3, 3), &mut rng);
    let mut g = Graph::new();
    let x = g.leaf(xt.clone(), true);
    let sq = g.mul(x, x).unwrap();
    let s = g.sum_all(sq);
    let loss = g.scale(s, 0.5);
    g.backward(loss).unwrap();
    for (a, b) in g.grad(x).unwrap().data().iter().zip(xt.data()) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn fanout_accumulates_gradients() {
    // loss = sum(x + x) => grad 2 everywhere.
    let mut g = Graph::new();
    let x = g.leaf(Tensor::filled(Shape::new(1, 1, 2, 2), 1.0), true);
    let y = g.add(x, x).unwrap();
    let loss = g.sum_all(y);
    g.backward(loss).unwrap();
    assert!(g.grad(x).unwrap().data().iter().all(|&v| v == 2.0));
}

/// Random-projection loss so every output element gets a distinct gradient.
fn projection_loss(
    g: &mut Graph<f64>,
    out: nn_engine::NodeId,
    seed: u64,
) -> nn_engine::NodeId {
    let mut rng = Rng::from_seed(seed);
    let w = Tensor::from_fn(g.shape(out), |_| rng.gaussian_f64());
    let wid = g.leaf(w, false);
    let p = g.mul(out, wid).unwrap();
    g.sum_all(p)
}

#[test]
fn two_layer_conv_bn_lrelu_matches_finite_differences() {
    let mut rng = Rng::from_seed(42);
    let mut store = ParamStore::<f64>::new();
    let conv1 = Conv2d::new(&mut store, "c1", 2, 3, 3, 3, 1, false, &mut rng);
    let bn1 = BatchNorm2d::new(&mut store, "b1", 3);
    let conv2 = Conv2d::new(&mut store, "c2", 3, 2, 3, 3, 2, true, &mut rng);
    let mut inputs = vec![random_tensor(Shape::new(2, 2, 6, 6), &mut rng)];
    let report = check_gradients(
        &mut store,
        &mut inputs,
        |g, store, ids| {
            let mut x = conv1.forward(g, store, ids[0])?;
            x = bn1.forward(g, store, x, Mode::Train)?;
            x = g.leaky_relu(x, 0.1);
            x = conv2.forward(g, store, x)?;
            Ok(projection_loss(g, x, 99))
        },
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(
        report.max_rel_err < 1e-5,
        "max relative error {} (entries: {:?})",
        report.max_rel_err,
        report.entries.iter().map(|e| (&e.name, e.max_rel_err)).collect::<Vec<_>>()
    );
}

#[test]
fn l2norm_layer_passes_grad_check() {
    let mut rng = Rng::from_seed(5);
    let mut store = ParamStore::<f64>::new();
    let mut inputs = vec![random_tensor(Shape::new(1, 4, 3, 3), &mut rng)];
    let report = check_gradients(
        &mut store,
        &mut inputs,
        |g, _store, ids| {
            let y = g.l2norm_channels(ids[0], 1e-12);
            Ok(projection_loss(g, y, 17))
        },
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.passed(), "max rel err {}", report.max_rel_err);
}

#[test]
fn sigmoid_gated_product_passes_grad_check() {
    let mut rng = Rng::from_seed(6);
    let mut store = ParamStore::<f64>::new();
    let mut inputs = vec![
        random_tensor(Shape::new(1, 3, 4, 4), &mut rng),
        random_tensor(Shape::new(1, 3, 4, 4), &mut rng),
    ];
    let report = check_gradients(
        &mut store,
        &mut inputs,
        |g, _store, ids| {
            let gate = g.sigmoid(ids[1]);
            let y = g.mul(ids[0], gate)?;
            Ok(projection_loss(g, y, 23))
        },
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.passed(), "max rel err {}", report.max_rel_err);
}

#[test]
fn every_layer_kind_passes_grad_check() {
    let mut rng = Rng::from_seed(77);
    let mut store = ParamStore::<f64>::new();
    let layers: Vec<(&str, Sequential)> = vec![
        (
            "conv3x3",
            Sequential(vec![LayerDef::Conv(Conv2d::new(&mut store, "k33", 2, 3, 3, 3, 1, true, &mut rng))]),
        ),
        (
            "conv1x3_3x1",
            Sequential(vec![
                LayerDef::Conv(Conv2d::new(&mut store, "k13", 2, 2, 1, 3, 1, true, &mut rng)),
                LayerDef::Conv(Conv2d::new(&mut store, "k31", 2, 2, 3, 1, 1, true, &mut rng)),
            ]),
        ),
        (
            "conv1x1_stride2",
            Sequential(vec![LayerDef::Conv(Conv2d::new(&mut store, "k11", 2, 4, 1, 1, 2, false, &mut rng))]),
        ),
        (
            "batchnorm",
            Sequential(vec![LayerDef::BatchNorm(BatchNorm2d::new(&mut store, "bn", 2))]),
        ),
        ("leaky_relu", Sequential(vec![LayerDef::LeakyRelu { slope: 0.1 }])),
        ("sigmoid", Sequential(vec![LayerDef::Sigmoid])),
        ("max_pool", Sequential(vec![LayerDef::MaxPool { k: 2, s: 2 }])),
        ("avg_pool", Sequential(vec![LayerDef::AvgPool { k: 2, s: 2 }])),
        ("global_avg", Sequential(vec![LayerDef::GlobalAvgPool])),
        ("global_max", Sequential(vec![LayerDef::GlobalMaxPool])),
        ("channel_mean", Sequential(vec![LayerDef::ChannelMean])),
        ("channel_max", Sequential(vec![LayerDef::ChannelMax])),
        ("upsample", Sequential(vec![LayerDef::Upsample2x])),
        ("l2norm", Sequential(vec![LayerDef::L2Norm])),
    ];
    for (i, (name, seq)) in layers.into_iter().enumerate() {
        let mut inputs = vec![random_tensor(Shape::new(2, 2, 4, 4), &mut rng)];
        let report = check_gradients(
            &mut store,
            &mut inputs,
            |g, store, ids| {
                let y = seq.forward(g, store, ids[0], Mode::Train)?;
                Ok(projection_loss(g, y, 1000 + i as u64))
            },
            &GradCheckConfig::default(),
        )
        .unwrap();
        assert!(report.passed(), "{name}: max rel err {}", report.max_rel_err);
    }
    // Linear gets a (n, c, 1, 1) input.
    let lin = Linear::new(&mut store, "fc", 5, 3, true, &mut rng);
    let mut inputs = vec![random_tensor(Shape::new(3, 5, 1, 1), &mut rng)];
    let report = check_gradients(
        &mut store,
        &mut inputs,
        |g, store, ids| {
            let y = lin.forward(g, store, ids[0])?;
            Ok(projection_loss(g, y, 2000))
        },
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.passed(), "linear: max rel err {}", report.max_rel_err);
}

#[test]
fn init_statistics_and_determinism() {
    // Sample variance of He-initialized 3x3 conv weights (8 -> 8 channels,
    // fan_in 72) within 25% of 2/72 over >= 10^4 draws.
    let mut draws = Vec::new();
    for seed in 0..18u64 {
        let mut rng = Rng::from_seed(seed);
        let mut store = ParamStore::<f64>::new();
        let conv = Conv2d::new(&mut store, "c", 8, 8, 3, 3, 1, true, &mut rng);
        draws.extend_from_slice(store.value(conv.weight).data());
        // Bias after init is exactly zero.
        assert!(store.value(conv.bias.unwrap()).data().iter().all(|&b| b == 0.0));
    }
    assert!(draws.len() >= 10_000);
    let mean: f64 = draws.iter().sum::<f64>() / draws.len() as f64;
    let var: f64 = draws.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / draws.len() as f64;
    let target = 2.0 / 72.0;
    assert!((var - target).abs() < 0.25 * target, "sample var {var}, target {target}");

    // Same seed, same parameters.
    let mk = || {
        let mut rng = Rng::from_seed(1234);
        let mut store = ParamStore::<f64>::new();
        let conv = Conv2d::new(&mut store, "c", 4, 4, 3, 3, 1, true, &mut rng);
        store.value(conv.weight).data().to_vec()
    };
    assert_eq!(mk(), mk());
}

#[test]
fn batchnorm_gamma_beta_grads_match_formulas() {
    // For loss = sum(y): dbeta = N per channel; dgamma = sum(xhat) = 0.
    let mut rng = Rng::from_seed(30);
    let mut store = ParamStore::<f64>::new();
    let bn = BatchNorm2d::new(&mut store, "bn", 2);
    let x = random_tensor(Shape::new(2, 2, 3, 3), &mut rng);
    let mut g = Graph::new();
    let xid = g.leaf(x, true);
    let y = bn.forward(&mut g, &mut store, xid, Mode::Train).unwrap();
    let loss = g.sum_all(y);
    g.backward(loss).unwrap();
    store.zero_grads();
    g.collect_param_grads(&mut store);
    let dbeta = store.grad(bn.beta).unwrap();
    for &v in dbeta.data() {
        assert!((v - 18.0).abs() < 1e-9); // N = 2*3*3
    }
    let dgamma = store.grad(bn.gamma).unwrap();
    for &v in dgamma.data() {
        assert!(v.abs() < 1e-9);
    }
}
