use nn_engine::{Graph, ParamStore, Shape, Tensor};
use ps_core::Rng;
use proptest::prelude::*;

fn random_tensor(shape: Shape, rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gaussian_f64())
}

#[test]
fn separable_rank1_kernel_matches_full_conv_on_interior() {
    // 1x3 conv with u then 3x1 conv with v == 3x3 conv with K = v (outer) u
    // away from the padded border.
    let mut rng = Rng::from_seed(404);
    let u = [0.3, -0.7, 0.5];
    let v = [0.9, 0.2, -0.4];
    let x = random_tensor(Shape::new(1, 1, 8, 8), &mut rng);

    let w_u = Tensor::from_vec(Shape::new(1, 1, 1, 3), u.to_vec()).unwrap();
    let w_v = Tensor::from_vec(Shape::new(1, 1, 3, 1), v.to_vec()).unwrap();
    let mut k = Vec::new();
    for vy in v {
        for ux in u {
            k.push(vy * ux);
        }
    }
    let w_k = Tensor::from_vec(Shape::new(1, 1, 3, 3), k).unwrap();

    let mut g = Graph::new();
    let xid = g.leaf(x.clone(), false);
    let wu = g.leaf(w_u, false);
    let wv = g.leaf(w_v, false);
    let wk = g.leaf(w_k, false);
    let sep = {
        let tmp = g.conv2d(xid, wu, None, 1).unwrap();
        g.conv2d(tmp, wv, None, 1).unwrap()
    };
    let full = g.conv2d(xid, wk, None, 1).unwrap();
    for y in 1..7 {
        for xx in 1..7 {
            let a = g.value(sep).at(0, 0, y, xx);
            let b = g.value(full).at(0, 0, y, xx);
            assert!((a - b).abs() < 1e-12, "({y},{xx}): {a} vs {b}");
        }
    }
}

#[test]
fn bilinear_upsample_2x_known_values() {
    let x = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![1.0, 3.0]).unwrap();
    let mut g = Graph::new();
    let xid = g.leaf(x, false);
    let y = g.upsample_bilinear_2x(xid);
    assert_eq!(g.shape(y), Shape::new(1, 1, 2, 4));
    let row: Vec<f64> = g.value(y).data()[..4].to_vec();
    assert_eq!(row, vec![1.0, 1.5, 2.5, 3.0]);
}

#[test]
fn upsample_of_constant_is_constant() {
    let x = Tensor::filled(Shape::new(2, 3, 4, 5), 0.37);
    let mut g = Graph::new();
    let xid = g.leaf(x, false);
    let y = g.upsample_bilinear_2x(xid);
    assert!(g.value(y).data().iter().all(|&v| (v - 0.37f64).abs() < 1e-15));
}

#[test]
fn global_avg_pool_equals_direct_mean() {
    let mut rng = Rng::from_seed(7);
    let x = random_tensor(Shape::new(3, 4, 6, 5), &mut rng);
    let mut g = Graph::new();
    let xid = g.leaf(x.clone(), false);
    let y = g.global_avg_pool(xid);
    for n in 0..3 {
        for c in 0..4 {
            let mut acc = 0.0;
            for yy in 0..6 {
                for xx in 0..5 {
                    acc += x.at(n, c, yy, xx);
                }
            }
            let direct = acc / 30.0;
            assert!((g.value(y).at(n, c, 0, 0) - direct).abs() < 1e-12);
        }
    }
}

#[test]
fn max_many_elementwise() {
    let a = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![1.0, 5.0]).unwrap();
    let b = Tensor::from_vec(Shape::new(1, 1, 1, 2), vec![3.0, 2.0]).unwrap();
    let mut g = Graph::new();
    let aid = g.leaf(a, false);
    let bid = g.leaf(b, false);
    let m = g.max_many(&[aid, bid]).unwrap();
    assert_eq!(g.value(m).data(), &[3.0, 5.0]);
    // Single input is the identity.
    let one = g.max_many(&[aid]).unwrap();
    assert_eq!(g.value(one).data(), &[1.0, 5.0]);
    // Permutation cannot change the values bitwise.
    let rev = g.max_many(&[bid, aid]).unwrap();
    assert_eq!(g.value(rev).data(), g.value(m).data());
}

#[test]
fn max_pool_tie_routes_to_lowest_linear_index() {
    // All-equal values: the argmax must be the first element of each window.
    let x = Tensor::filled(Shape::new(1, 1, 2, 2), 1.5);
    let mut g = Graph::new();
    let xid = g.leaf(x, true);
    let y = g.max_pool(xid, 2, 2).unwrap();
    let loss = g.sum_all(y);
    g.backward(loss).unwrap();
    let gx = g.grad(xid).unwrap();
    assert_eq!(gx.data(), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn batchnorm_eval_is_bitwise_deterministic() {
    let mut rng = Rng::from_seed(11);
    let mut store = ParamStore::<f64>::new();
    let bn = nn_engine::BatchNorm2d::new(&mut store, "bn", 3);
    let x = random_tensor(Shape::new(2, 3, 4, 4), &mut rng);
    let run = |store: &mut ParamStore<f64>| {
        let mut g = Graph::new();
        let xid = g.leaf(x.clone(), false);
        let y = bn.forward(&mut g, store, xid, nn_engine::Mode::Eval).unwrap();
        g.value(y).clone()
    };
    let a = run(&mut store);
    let b = run(&mut store);
    assert_eq!(a, b);
}

#[test]
fn l2norm_unit_outputs_and_orthogonal_gradient() {
    let mut rng = Rng::from_seed(21);
    let x = random_tensor(Shape::new(1, 3, 3, 3), &mut rng);
    let mut g = Graph::new();
    let xid = g.leaf(x, true);
    let y = g.l2norm_channels(xid, 1e-12);
    // Unit channel vectors at every position.
    for p in 0..9 {
        let mut sq = 0.0;
        for c in 0..3 {
            let v = g.value(y).data()[c * 9 + p];
            sq += v * v;
        }
        assert!((sq.sqrt() - 1.0).abs() < 1e-12);
    }
    // Random projection loss; input gradient must be orthogonal to the
    // output direction at each position (projector property).
    let w = random_tensor(Shape::new(1, 3, 3, 3), &mut rng);
    let wid = g.leaf(w, false);
    let prod = g.mul(y, wid).unwrap();
    let loss = g.sum_all(prod);
    g.backward(loss).unwrap();
    let gx = g.grad(xid).unwrap();
    for p in 0..9 {
        let mut dot = 0.0;
        for c in 0..3 {
            dot += gx.data()[c * 9 + p] * g.value(y).data()[c * 9 + p];
        }
        assert!(dot.abs() < 1e-12, "position {p}: grad not orthogonal ({dot})");
    }
}

#[test]
fn detached_backward_is_an_error() {
    let mut g = Graph::<f64>::new();
    let x = g.leaf(Tensor::filled(Shape::new(1, 1, 1, 1), 2.0), false);
    let y = g.scale(x, 3.0);
    assert!(matches!(g.backward(y), Err(nn_engine::EngineError::DetachedBackward)));
}

#[test]
fn concat_and_crop_shapes() {
    let a = Tensor::<f64>::filled(Shape::new(2, 3, 4, 4), 1.0);
    let b = Tensor::<f64>::filled(Shape::new(2, 5, 4, 4), 2.0);
    let mut g = Graph::new();
    let aid = g.leaf(a, false);
    let bid = g.leaf(b, false);
    let cat = g.concat_channels(&[aid, bid]).unwrap();
    assert_eq!(g.shape(cat), Shape::new(2, 8, 4, 4));
    assert_eq!(g.value(cat).at(0, 2, 0, 0), 1.0);
    assert_eq!(g.value(cat).at(0, 3, 0, 0), 2.0);
    let cropped = g.crop_to(cat, 3, 2).unwrap();
    assert_eq!(g.shape(cropped), Shape::new(2, 8, 3, 2));
}

#[test]
fn shape_mismatch_errors_name_shapes() {
    let a = Tensor::<f64>::zeros(Shape::new(1, 2, 3, 3));
    let b = Tensor::<f64>::zeros(Shape::new(1, 2, 3, 4));
    let mut g = Graph::new();
    let aid = g.leaf(a, false);
    let bid = g.leaf(b, false);
    let err = g.add(aid, bid).unwrap_err();
    let msg = err.to_string();
    assert!(msg.contains("1x2x3x3") && msg.contains("1x2x3x4"), "got {msg}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]
    #[test]
    fn same_padding_preserves_spatial_dims(h in 1usize..11, w in 1usize..11, kind in 0usize..4) {
        let (kh, kw) = [(1, 1), (3, 3), (1, 3), (3, 1)][kind];
        let x = Tensor::<f64>::filled(Shape::new(1, 2, h, w), 0.5);
        let k = Tensor::<f64>::filled(Shape::new(3, 2, kh, kw), 0.1);
        let mut g = Graph::new();
        let xid = g.leaf(x, false);
        let kid = g.leaf(k, false);
        let y = g.conv2d(xid, kid, None, 1).unwrap();
        prop_assert_eq!(g.shape(y), Shape::new(1, 3, h, w));
    }
}
