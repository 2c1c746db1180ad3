//! The toolkit-level gradient-check suite: every layer kind, the full RMAFF
//! module, and a tiny end-to-end network, all in double precision.

use nn_engine::{
    check_gradients, BatchNorm2d, Conv2d, GradCheckConfig, LayerDef, Linear, Mode, NodeId,
    ParamStore, Sequential, Shape, Tensor,
};
use ps_core::Rng;
use rmaff_net::{NetworkConfig, RmaffModule, RmaffPsn};

use crate::error::{EvalError, EvalResult};

#[derive(Clone, Debug)]
pub struct SuiteItem {
    pub name: String,
    pub max_rel_err: f64,
}

fn random_tensor(shape: Shape, rng: &mut Rng) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.gaussian_f64())
}

fn projection_loss(
    g: &mut nn_engine::Graph<f64>,
    out: NodeId,
    seed: u64,
) -> nn_engine::EngineResult<NodeId> {
    let mut rng = Rng::from_seed(seed);
    let w = Tensor::from_fn(g.shape(out), |_| rng.gaussian_f64());
    let wid = g.leaf(w, false);
    let p = g.mul(out, wid)?;
    Ok(g.sum_all(p))
}

fn net_err(e: rmaff_net::NetError) -> nn_engine::EngineError {
    match e {
        rmaff_net::NetError::Engine(e) => e,
        other => nn_engine::EngineError::InvalidArgument(other.to_string()),
    }
}

/// One finite-difference check per layer kind of the engine inventory.
pub fn layer_suite() -> EvalResult<Vec<SuiteItem>> {
    let mut rng = Rng::from_seed(0x6C61);
    let mut items = Vec::new();
    let mut store = ParamStore::<f64>::new();
    let defs: Vec<(&str, Sequential)> = vec![
        ("conv1x1", Sequential(vec![LayerDef::Conv(Conv2d::new(&mut store, "c11", 2, 3, 1, 1, 1, true, &mut rng))])),
        ("conv3x3", Sequential(vec![LayerDef::Conv(Conv2d::new(&mut store, "c33", 2, 3, 3, 3, 1, true, &mut rng))])),
        ("conv1x3", Sequential(vec![LayerDef::Conv(Conv2d::new(&mut store, "c13", 2, 3, 1, 3, 1, true, &mut rng))])),
        ("conv3x1", Sequential(vec![LayerDef::Conv(Conv2d::new(&mut store, "c31", 2, 3, 3, 1, 1, true, &mut rng))])),
        ("conv3x3_stride2", Sequential(vec![LayerDef::Conv(Conv2d::new(&mut store, "c33s2", 2, 3, 3, 3, 2, false, &mut rng))])),
        ("batchnorm", Sequential(vec![LayerDef::BatchNorm(BatchNorm2d::new(&mut store, "bn", 2))])),
        ("leaky_relu", Sequential(vec![LayerDef::LeakyRelu { slope: 0.1 }])),
        ("sigmoid", Sequential(vec![LayerDef::Sigmoid])),
        ("max_pool", Sequential(vec![LayerDef::MaxPool { k: 2, s: 2 }])),
        ("avg_pool", Sequential(vec![LayerDef::AvgPool { k: 2, s: 2 }])),
        ("global_max_pool", Sequential(vec![LayerDef::GlobalMaxPool])),
        ("global_avg_pool", Sequential(vec![LayerDef::GlobalAvgPool])),
        ("channel_mean", Sequential(vec![LayerDef::ChannelMean])),
        ("channel_max", Sequential(vec![LayerDef::ChannelMax])),
        ("upsample_bilinear", Sequential(vec![LayerDef::Upsample2x])),
        ("l2norm_channels", Sequential(vec![LayerDef::L2Norm])),
    ];
    for (i, (name, seq)) in defs.into_iter().enumerate() {
        let mut inputs = vec![random_tensor(Shape::new(2, 2, 4, 4), &mut rng)];
        let report = check_gradients(
            &mut store,
            &mut inputs,
            |g, store, ids| {
                let y = seq.forward(g, store, ids[0], Mode::Train)?;
                projection_loss(g, y, 7000 + i as u64)
            },
            &GradCheckConfig::default(),
        )?;
        items.push(SuiteItem { name: name.to_string(), max_rel_err: report.max_rel_err });
    }
    // Fully-connected wants (n, c, 1, 1) input.
    let lin = Linear::new(&mut store, "fc", 5, 3, true, &mut rng);
    let mut inputs = vec![random_tensor(Shape::new(3, 5, 1, 1), &mut rng)];
    let report = check_gradients(
        &mut store,
        &mut inputs,
        |g, store, ids| {
            let y = lin.forward(g, store, ids[0])?;
            projection_loss(g, y, 7100)
        },
        &GradCheckConfig::default(),
    )?;
    items.push(SuiteItem { name: "fully_connected".to_string(), max_rel_err: report.max_rel_err });
    Ok(items)
}

/// Full RMAFF module on a 2x8x6x6 input.
pub fn module_check(cfg: &NetworkConfig) -> EvalResult<SuiteItem> {
    let mut rng = Rng::from_seed(0x6D6F);
    let mut store = ParamStore::<f64>::new();
    let module = RmaffModule::new(&mut store, "m", 8, 8, cfg, true, &mut rng);
    let mut inputs = vec![random_tensor(Shape::new(2, 8, 6, 6), &mut rng)];
    let report = check_gradients(
        &mut store,
        &mut inputs,
        |g, store, ids| {
            let y = module.forward(g, store, ids[0], Mode::Train).map_err(net_err)?;
            projection_loss(g, y, 7200)
        },
        &GradCheckConfig::default(),
    )?;
    Ok(SuiteItem { name: "rmaff_module".to_string(), max_rel_err: report.max_rel_err })
}

/// Tiny full network, m = 2 lights, 8x8 input, masked cosine loss.
pub fn full_net_check(cfg: &NetworkConfig) -> EvalResult<SuiteItem> {
    let mut rng = Rng::from_seed(0x6E65);
    let mut store = ParamStore::<f64>::new();
    let net = RmaffPsn::new(&mut store, cfg, 1, &mut rng).map_err(EvalError::from)?;
    let mut inputs = vec![
        random_tensor(Shape::new(1, 4, 8, 8), &mut rng),
        random_tensor(Shape::new(1, 4, 8, 8), &mut rng),
    ];
    // Fixed random unit-ish ground truth and full mask.
    let mut gt_rng = Rng::from_seed(0x6774);
    let gt = Tensor::from_fn(Shape::new(1, 3, 8, 8), |_| gt_rng.gaussian_f64());
    let mask = Tensor::filled(Shape::new(1, 1, 8, 8), 1.0);
    let report = check_gradients(
        &mut store,
        &mut inputs,
        |g, store, ids| {
            let pred = net.forward_batch(g, store, ids, Mode::Train).map_err(net_err)?;
            let gt_id = g.leaf(gt.clone(), false);
            let mask_id = g.leaf(mask.clone(), false);
            let prod = g.mul(pred, gt_id)?;
            let dot = g.channel_sum(prod);
            let one_minus = g.affine(dot, -1.0, 1.0);
            let masked = g.mul(one_minus, mask_id)?;
            let sum = g.sum_all(masked);
            Ok(g.scale(sum, 1.0 / 64.0))
        },
        &GradCheckConfig::default(),
    )?;
    Ok(SuiteItem { name: "full_network_tiny".to_string(), max_rel_err: report.max_rel_err })
}

/// The whole suite; pass iff the worst entry is below 1e-4.
pub fn full_suite(cfg: &NetworkConfig) -> EvalResult<(Vec<SuiteItem>, f64)> {
    let mut items = layer_suite()?;
    items.push(module_check(cfg)?);
    items.push(full_net_check(cfg)?);
    let max = items.iter().map(|i| i.max_rel_err).fold(0.0f64, f64::max);
    Ok((items, max))
}
