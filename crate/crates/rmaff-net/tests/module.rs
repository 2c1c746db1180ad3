use nn_engine::{check_gradients, GradCheckConfig, Graph, Mode, ParamStore, Shape, Tensor};
use ps_core::Rng;
use rmaff_net::{ChannelAttention, NetworkConfig, RmaffModule, SpatialAttention};

fn random_tensor(shape: Shape, rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gaussian_f64())
}

fn zero_all_params(store: &mut ParamStore<f64>) {
    for id in store.ids().collect::<Vec<_>>() {
        if store.get(id).trainable {
            store.value_mut(id).data_mut().fill(0.0);
        }
    }
}

fn tiny_cfg() -> NetworkConfig {
    NetworkConfig::tiny()
}

#[test]
fn zero_parameters_give_zero_branches() {
    let cfg = tiny_cfg();
    let mut rng = Rng::from_seed(1);
    let mut store = ParamStore::<f64>::new();
    let module = RmaffModule::new(&mut store, "m", 8, 8, &cfg, true, &mut rng);
    zero_all_params(&mut store);
    let mut g = Graph::new();
    let x = g.leaf(random_tensor(Shape::new(1, 8, 5, 5), &mut rng), false);
    let branches = module.branch_outputs(&mut g, &mut store, x, Mode::Train).unwrap();
    assert_eq!(branches.len(), 4);
    for b in branches {
        assert!(g.value(b).data().iter().all(|&v| v == 0.0));
    }
}

#[test]
fn branch_shapes_match_contract() {
    let cfg = tiny_cfg();
    let mut rng = Rng::from_seed(2);
    let mut store = ParamStore::<f64>::new();
    let module = RmaffModule::new(&mut store, "m", 6, 5, &cfg, true, &mut rng);
    let mut g = Graph::new();
    let x = g.leaf(random_tensor(Shape::new(2, 6, 7, 9), &mut rng), false);
    let branches = module.branch_outputs(&mut g, &mut store, x, Mode::Eval).unwrap();
    for b in &branches {
        assert_eq!(g.shape(*b), Shape::new(2, cfg.c_branch, 7, 9));
    }
    let out = module.forward(&mut g, &mut store, x, Mode::Eval).unwrap();
    assert_eq!(g.shape(out), Shape::new(2, 5, 7, 9));
}

#[test]
fn zero_parameters_give_zero_module_output() {
    let cfg = tiny_cfg();
    let mut rng = Rng::from_seed(3);
    let mut store = ParamStore::<f64>::new();
    let module = RmaffModule::new(&mut store, "m", 4, 6, &cfg, true, &mut rng);
    zero_all_params(&mut store);
    let mut g = Graph::new();
    let x = g.leaf(random_tensor(Shape::new(1, 4, 4, 4), &mut rng), false);
    let out = module.forward(&mut g, &mut store, x, Mode::Train).unwrap();
    assert!(g.value(out).data().iter().all(|&v| v == 0.0));
}

#[test]
fn second_branch_equals_explicit_recomposition() {
    // Branch_2 = AsyConv_2(width_match(F) (+) Branch_1), re-evaluated by
    // explicit composition in the same graph.
    let cfg = tiny_cfg();
    let mut rng = Rng::from_seed(4);
    let mut store = ParamStore::<f64>::new();
    let module = RmaffModule::new(&mut store, "m", 8, 8, &cfg, true, &mut rng);
    let mut g = Graph::new();
    let x = g.leaf(random_tensor(Shape::new(1, 8, 6, 6), &mut rng), false);
    let branches = module.branch_outputs(&mut g, &mut store, x, Mode::Eval).unwrap();
    // width_match exists because c_in (8) != c_branch (4).
    let wm = module.width_match_conv().expect("width match required");
    let matched = wm.forward(&mut g, &store, x).unwrap();
    let sum = g.add(matched, branches[0]).unwrap();
    let explicit = module.branch_convs()[1].forward(&mut g, &mut store, sum, Mode::Eval).unwrap();
    assert_eq!(g.value(explicit), g.value(branches[1]));
}

#[test]
fn zero_mlp_makes_channel_gate_one_half() {
    let cfg = tiny_cfg();
    let mut rng = Rng::from_seed(5);
    let mut store = ParamStore::<f64>::new();
    let ca = ChannelAttention::new(&mut store, "ca", 16, 4, 0.1, &mut rng);
    zero_all_params(&mut store);
    let mut g = Graph::new();
    let xt = random_tensor(Shape::new(2, 16, 3, 3), &mut rng);
    let x = g.leaf(xt.clone(), false);
    let y = ca.forward(&mut g, &mut store, x).unwrap();
    assert_eq!(g.shape(y), Shape::new(2, 16, 3, 3));
    for (a, b) in g.value(y).data().iter().zip(xt.data()) {
        assert_eq!(*a, 0.5 * *b);
    }
    let _ = cfg;
}

#[test]
fn channel_attention_matches_handwritten_reference() {
    let mut rng = Rng::from_seed(6);
    let mut store = ParamStore::<f64>::new();
    let channels = 8;
    let reduction = 4;
    let ca = ChannelAttention::new(&mut store, "ca", channels, reduction, 0.1, &mut rng);
    let xt = random_tensor(Shape::new(1, channels, 4, 4), &mut rng);
    let mut g = Graph::new();
    let x = g.leaf(xt.clone(), false);
    let y = ca.forward(&mut g, &mut store, x).unwrap();

    // Independent straight-line re-evaluation with plain loops.
    let hidden = channels / reduction;
    let w1 = store.value(store.find("ca.fc1.weight").unwrap()).data().to_vec();
    let b1 = store.value(store.find("ca.fc1.bias").unwrap()).data().to_vec();
    let w2 = store.value(store.find("ca.fc2.weight").unwrap()).data().to_vec();
    let b2 = store.value(store.find("ca.fc2.bias").unwrap()).data().to_vec();
    let mlp = |v: &[f64]| -> Vec<f64> {
        let mut h = vec![0.0; hidden];
        for o in 0..hidden {
            let mut acc = b1[o];
            for i in 0..channels {
                acc += w1[o * channels + i] * v[i];
            }
            h[o] = if acc > 0.0 { acc } else { 0.1 * acc };
        }
        let mut out = vec![0.0; channels];
        for o in 0..channels {
            let mut acc = b2[o];
            for (i, hv) in h.iter().enumerate() {
                acc += w2[o * hidden + i] * hv;
            }
            out[o] = acc;
        }
        out
    };
    let mut gap = vec![0.0; channels];
    let mut gmp = vec![f64::NEG_INFINITY; channels];
    for c in 0..channels {
        for p in 0..16 {
            let v = xt.data()[c * 16 + p];
            gap[c] += v / 16.0;
            gmp[c] = gmp[c].max(v);
        }
    }
    let (pa, pm) = (mlp(&gap), mlp(&gmp));
    for c in 0..channels {
        let gate = 1.0 / (1.0 + (-(pa[c] + pm[c])).exp());
        for p in 0..16 {
            let want = gate * xt.data()[c * 16 + p];
            let got = g.value(y).data()[c * 16 + p];
            assert!((want - got).abs() < 1e-12, "c={c} p={p}: {want} vs {got}");
        }
    }
}

#[test]
fn zero_conv_makes_spatial_gate_one_half() {
    let mut rng = Rng::from_seed(7);
    let mut store = ParamStore::<f64>::new();
    let sa = SpatialAttention::new(&mut store, "sa", 3, &mut rng);
    zero_all_params(&mut store);
    let xt = random_tensor(Shape::new(1, 5, 4, 6), &mut rng);
    let mut g = Graph::new();
    let x = g.leaf(xt.clone(), false);
    let y = sa.forward(&mut g, &mut store, x).unwrap();
    for (a, b) in g.value(y).data().iter().zip(xt.data()) {
        assert_eq!(*a, 0.5 * *b);
    }
}

#[test]
fn constant_input_gives_spatially_constant_gate() {
    let mut rng = Rng::from_seed(8);
    let mut store = ParamStore::<f64>::new();
    let sa = SpatialAttention::new(&mut store, "sa", 3, &mut rng);
    let xt = Tensor::filled(Shape::new(1, 4, 5, 5), 0.7);
    let mut g = Graph::new();
    let x = g.leaf(xt, false);
    let y = sa.forward(&mut g, &mut store, x).unwrap();
    // Interior positions see the same (constant) stats and kernel support, so
    // the gated output is one constant per channel there.
    for c in 0..4 {
        let center = g.value(y).at(0, c, 2, 2);
        for yy in 1..4 {
            for xx in 1..4 {
                assert!((g.value(y).at(0, c, yy, xx) - center).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn spatial_attention_matches_handwritten_reference() {
    let mut rng = Rng::from_seed(9);
    let mut store = ParamStore::<f64>::new();
    let k = 3usize;
    let sa = SpatialAttention::new(&mut store, "sa", k, &mut rng);
    let (c, h, w) = (4usize, 5usize, 6usize);
    let xt = random_tensor(Shape::new(1, c, h, w), &mut rng);
    let mut g = Graph::new();
    let x = g.leaf(xt.clone(), false);
    let y = sa.forward(&mut g, &mut store, x).unwrap();

    let wt = store.value(store.find("sa.conv.weight").unwrap()).data().to_vec();
    let bias = store.value(store.find("sa.conv.bias").unwrap()).data()[0];
    let plane = h * w;
    let mut mean = vec![0.0; plane];
    let mut maxс = vec![f64::NEG_INFINITY; plane];
    for p in 0..plane {
        for ch in 0..c {
            let v = xt.data()[ch * plane + p];
            mean[p] += v / c as f64;
            maxс[p] = maxс[p].max(v);
        }
    }
    let pad = (k - 1) / 2;
    for y0 in 0..h {
        for x0 in 0..w {
            let mut acc = bias;
            for ky in 0..k {
                for kx in 0..k {
                    let iy = y0 as isize + ky as isize - pad as isize;
                    let ix = x0 as isize + kx as isize - pad as isize;
                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                        continue;
                    }
                    let p = iy as usize * w + ix as usize;
                    acc += wt[ky * k + kx] * mean[p];
                    acc += wt[k * k + ky * k + kx] * maxс[p];
                }
            }
            let gate = 1.0 / (1.0 + (-acc).exp());
            for ch in 0..c {
                let want = gate * xt.data()[ch * plane + y0 * w + x0];
                let got = g.value(y).data()[ch * plane + y0 * w + x0];
                assert!((want - got).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn half_gates_reduce_to_quarter_scaled_no_attention_path() {
    // With attention parameters zeroed both gates are exactly 0.5, so the
    // full module must equal the attention-free path with the concatenated
    // features scaled by 0.25 before the same 3x3 projection.
    let cfg = tiny_cfg();
    let mut rng = Rng::from_seed(10);
    let mut store = ParamStore::<f64>::new();
    let module = RmaffModule::new(&mut store, "m", 4, 4, &cfg, true, &mut rng);
    for id in module.attention_param_ids() {
        store.value_mut(id).data_mut().fill(0.0);
    }
    let mut g = Graph::new();
    let x = g.leaf(random_tensor(Shape::new(1, 4, 6, 6), &mut rng), false);
    let full = module.forward(&mut g, &mut store, x, Mode::Eval).unwrap();

    let branches = module.branch_outputs(&mut g, &mut store, x, Mode::Eval).unwrap();
    let cat = g.concat_channels(&branches).unwrap();
    let scaled = g.scale(cat, 0.25);
    let main = module.project_conv().forward(&mut g, &store, scaled).unwrap();
    let res = module.residual_conv().forward(&mut g, &store, x).unwrap();
    let manual = g.add(res, main).unwrap();
    assert_eq!(g.value(full), g.value(manual));
}

#[test]
fn rmaff_module_gradients_match_finite_differences() {
    let cfg = tiny_cfg();
    let mut rng = Rng::from_seed(11);
    let mut store = ParamStore::<f64>::new();
    let module = RmaffModule::new(&mut store, "m", 8, 8, &cfg, true, &mut rng);
    let mut inputs = vec![random_tensor(Shape::new(2, 8, 6, 6), &mut rng)];
    let report = check_gradients(
        &mut store,
        &mut inputs,
        |g, store, ids| {
            let y = module.forward(g, store, ids[0], Mode::Train).map_err(|e| match e {
                rmaff_net::NetError::Engine(e) => e,
                other => nn_engine::EngineError::InvalidArgument(other.to_string()),
            })?;
            let mut r = Rng::from_seed(999);
            let w = Tensor::from_fn(g.shape(y), |_| r.gaussian_f64());
            let wid = g.leaf(w, false);
            let p = g.mul(y, wid)?;
            Ok(g.sum_all(p))
        },
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.passed(), "max rel err {}", report.max_rel_err);
}
