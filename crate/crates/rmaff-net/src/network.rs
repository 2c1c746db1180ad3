use nn_engine::{Conv2d, Graph, Mode, NodeId, ParamStore, Scalar, Shape, Tensor};
use ps_core::{Image, ImageStack, NormalMap, Rng, Vec3};

use crate::config::{Downsample, NetworkConfig, RmaffPlacement, Variant};
use crate::error::{NetError, NetResult};
use crate::module::{ConvBn, RmaffModule};

/// Light chunk for inference; bounds memory while leaving the fused result
/// independent of chunking (max is order-agnostic).
const INFER_CHUNK: usize = 8;

#[derive(Clone, Debug)]
enum Down {
    Conv(ConvBn),
    Pool(ConvBn),
}

impl Down {
    fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        scope: &str,
        c_in: usize,
        c_out: usize,
        kind: Downsample,
        slope: f64,
        rng: &mut Rng,
    ) -> Self {
        match kind {
            Downsample::Conv => {
                Down::Conv(ConvBn::new(store, scope, c_in, c_out, 3, 3, 2, slope, rng))
            }
            Downsample::Pool => {
                Down::Pool(ConvBn::new(store, scope, c_in, c_out, 3, 3, 1, slope, rng))
            }
        }
    }

    fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        x: NodeId,
        mode: Mode,
    ) -> NetResult<NodeId> {
        match self {
            Down::Conv(c) => c.forward(g, store, x, mode),
            Down::Pool(c) => {
                let pooled = g.max_pool(x, 2, 2)?;
                c.forward(g, store, pooled, mode)
            }
        }
    }
}

/// Per-(image, light) feature extractor: a full-resolution shallow path and
/// a quarter-resolution deep path, each optionally enhanced by an RMAFF
/// module, stitched by channel concat and projected to the fused width.
#[derive(Clone, Debug)]
pub struct Extractor {
    shallow1: ConvBn,
    shallow2: ConvBn,
    rmaff_shallow: Option<RmaffModule>,
    down1: Down,
    deep1: ConvBn,
    down2: Down,
    deep2: ConvBn,
    rmaff_deep: Option<RmaffModule>,
    rmaff_post: Option<RmaffModule>,
    fuse: ConvBn,
}

impl Extractor {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        scope: &str,
        in_channels: usize,
        cfg: &NetworkConfig,
        rng: &mut Rng,
    ) -> Self {
        let slope = cfg.lrelu_slope;
        let attention = cfg.variant != Variant::NoAttention;
        let per_branch = cfg.rmaff_placement == RmaffPlacement::PerBranch;
        let both_paths =
            matches!(cfg.variant, Variant::Full | Variant::NoAttention) && per_branch;
        let deep_only = cfg.variant == Variant::SingleRmaff;
        let post = matches!(cfg.variant, Variant::Full | Variant::NoAttention) && !per_branch;

        let shallow1 =
            ConvBn::new(store, &format!("{scope}.shallow1"), in_channels, cfg.c_shallow, 3, 3, 1, slope, rng);
        let shallow2 =
            ConvBn::new(store, &format!("{scope}.shallow2"), cfg.c_shallow, cfg.c_shallow, 3, 3, 1, slope, rng);
        let rmaff_shallow = both_paths.then(|| {
            RmaffModule::new(store, &format!("{scope}.rmaff_s"), cfg.c_shallow, cfg.c_shallow, cfg, attention, rng)
        });
        let down1 = Down::new(store, &format!("{scope}.down1"), in_channels, cfg.c_shallow, cfg.downsample, slope, rng);
        let deep1 =
            ConvBn::new(store, &format!("{scope}.deep1"), cfg.c_shallow, cfg.c_deep, 3, 3, 1, slope, rng);
        let down2 = Down::new(store, &format!("{scope}.down2"), cfg.c_deep, cfg.c_deep, cfg.downsample, slope, rng);
        let deep2 =
            ConvBn::new(store, &format!("{scope}.deep2"), cfg.c_deep, cfg.c_deep, 3, 3, 1, slope, rng);
        let rmaff_deep = (both_paths || deep_only).then(|| {
            RmaffModule::new(store, &format!("{scope}.rmaff_d"), cfg.c_deep, cfg.c_deep, cfg, attention, rng)
        });
        let cat_width = cfg.c_shallow + cfg.c_deep;
        let rmaff_post = post.then(|| {
            RmaffModule::new(store, &format!("{scope}.rmaff_post"), cat_width, cat_width, cfg, attention, rng)
        });
        let fuse = ConvBn::new(store, &format!("{scope}.fuse"), cat_width, cfg.c_fused, 1, 1, 1, slope, rng);
        Extractor {
            shallow1,
            shallow2,
            rmaff_shallow,
            down1,
            deep1,
            down2,
            deep2,
            rmaff_deep,
            rmaff_post,
            fuse,
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        x: NodeId,
        mode: Mode,
    ) -> NetResult<NodeId> {
        let shape = g.shape(x);
        if shape.h < 4 || shape.w < 4 {
            return Err(NetError::Input(format!(
                "extractor needs at least 4x4 input (two halvings), got {}x{}",
                shape.h, shape.w
            )));
        }
        let mut s = self.shallow1.forward(g, store, x, mode)?;
        s = self.shallow2.forward(g, store, s, mode)?;
        if let Some(m) = &self.rmaff_shallow {
            s = m.forward(g, store, s, mode)?;
        }
        let mut d = self.down1.forward(g, store, x, mode)?;
        d = self.deep1.forward(g, store, d, mode)?;
        d = self.down2.forward(g, store, d, mode)?;
        d = self.deep2.forward(g, store, d, mode)?;
        if let Some(m) = &self.rmaff_deep {
            d = m.forward(g, store, d, mode)?;
        }
        d = g.upsample_bilinear_2x(d);
        d = g.upsample_bilinear_2x(d);
        d = g.crop_to(d, shape.h, shape.w)?;
        let mut cat = g.concat_channels(&[s, d])?;
        if let Some(m) = &self.rmaff_post {
            cat = m.forward(g, store, cat, mode)?;
        }
        self.fuse.forward(g, store, cat, mode)
    }

    pub fn rmaff_shallow(&self) -> Option<&RmaffModule> {
        self.rmaff_shallow.as_ref()
    }

    pub fn rmaff_deep(&self) -> Option<&RmaffModule> {
        self.rmaff_deep.as_ref()
    }
}

/// Normal regressor: entry conv, dense block with feature reuse, projection
/// to 3 channels and channelwise L2 normalization.
#[derive(Clone, Debug)]
pub struct Regressor {
    entry: ConvBn,
    dense: Vec<ConvBn>,
    project: Conv2d,
    entry_width: usize,
    growth: usize,
}

impl Regressor {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        scope: &str,
        c_fused: usize,
        cfg: &NetworkConfig,
        rng: &mut Rng,
    ) -> Self {
        let entry_width = (c_fused / 2).max(1);
        let entry = ConvBn::new(store, &format!("{scope}.entry"), c_fused, entry_width, 3, 3, 1, cfg.lrelu_slope, rng);
        let mut dense = Vec::with_capacity(cfg.dense_layers);
        for i in 0..cfg.dense_layers {
            let c_in = entry_width + i * cfg.dense_growth;
            dense.push(ConvBn::new(
                store,
                &format!("{scope}.dense{i}"),
                c_in,
                cfg.dense_growth,
                3,
                3,
                1,
                cfg.lrelu_slope,
                rng,
            ));
        }
        let project = Conv2d::new(
            store,
            &format!("{scope}.project"),
            entry_width + cfg.dense_layers * cfg.dense_growth,
            3,
            3,
            3,
            1,
            true,
            rng,
        );
        Regressor { entry, dense, project, entry_width, growth: cfg.dense_growth }
    }

    /// Width of the concatenated features fed to the final projection.
    pub fn pre_projection_width(&self) -> usize {
        self.entry_width + self.dense.len() * self.growth
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        fused: NodeId,
        mode: Mode,
    ) -> NetResult<NodeId> {
        let mut features = vec![self.entry.forward(g, store, fused, mode)?];
        for layer in &self.dense {
            let input = if features.len() == 1 {
                features[0]
            } else {
                g.concat_channels(&features)?
            };
            features.push(layer.forward(g, store, input, mode)?);
        }
        let all = g.concat_channels(&features)?;
        let raw = self.project.forward(g, store, all)?;
        Ok(g.l2norm_channels(raw, T::of(1e-12)))
    }
}

/// The full network: shared per-image extraction, order-agnostic max-pool
/// fusion, dense-block normal regression.
#[derive(Clone, Debug)]
pub struct RmaffPsn {
    pub extractor: Extractor,
    pub regressor: Regressor,
    pub cfg: NetworkConfig,
    pub in_channels: usize,
}

impl RmaffPsn {
    /// `image_channels` is 1 (gray) or 3 (RGB); the light direction is
    /// channel-concatenated, adding 3 input channels.
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        cfg: &NetworkConfig,
        image_channels: usize,
        rng: &mut Rng,
    ) -> NetResult<Self> {
        cfg.validate()?;
        if image_channels != 1 && image_channels != 3 {
            return Err(NetError::Input(format!(
                "image_channels must be 1 or 3, got {image_channels}"
            )));
        }
        let in_channels = image_channels + 3;
        let extractor = Extractor::new(store, "extractor", in_channels, cfg, rng);
        let regressor = Regressor::new(store, "regressor", cfg.c_fused, cfg, rng);
        Ok(RmaffPsn { extractor, regressor, cfg: cfg.clone(), in_channels })
    }

    /// Forward over m per-light input nodes, each (n, image_channels+3, h, w):
    /// per-image extraction with shared parameters, elementwise max fusion,
    /// regression to unit normals (n, 3, h, w).
    pub fn forward_batch<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        per_light_inputs: &[NodeId],
        mode: Mode,
    ) -> NetResult<NodeId> {
        if per_light_inputs.is_empty() {
            return Err(NetError::Input("network needs at least one (image, light) pair".into()));
        }
        let mut feats = Vec::with_capacity(per_light_inputs.len());
        for &x in per_light_inputs {
            feats.push(self.extractor.forward(g, store, x, mode)?);
        }
        let fused = fuse_maxpool(g, &feats)?;
        self.regressor.forward(g, store, fused, mode)
    }
}

/// Order-agnostic aggregation across the image axis: elementwise maximum.
pub fn fuse_maxpool<T: Scalar>(g: &mut Graph<T>, feats: &[NodeId]) -> NetResult<NodeId> {
    Ok(g.max_many(feats)?)
}

/// Packs (image, light) pairs into the network input layout: image channels
/// first, then the light direction broadcast spatially. One batch row per
/// pair.
pub fn assemble_inputs<T: Scalar>(
    pairs: &[(&Image<T>, Vec3<T>)],
) -> NetResult<Tensor<T>> {
    if pairs.is_empty() {
        return Err(NetError::Input("no (image, light) pairs".into()));
    }
    let (h, w, c) = (pairs[0].0.height(), pairs[0].0.width(), pairs[0].0.channels());
    let shape = Shape::new(pairs.len(), c + 3, h, w);
    let mut out = Tensor::zeros(shape);
    for (row, (image, light)) in pairs.iter().enumerate() {
        if image.height() != h || image.width() != w || image.channels() != c {
            return Err(NetError::Input("images in one batch must share shape".into()));
        }
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    out.set(row, ch, y, x, image.get(y, x, ch));
                }
            }
        }
        for (ch, v) in [light.x, light.y, light.z].into_iter().enumerate() {
            for y in 0..h {
                for x in 0..w {
                    out.set(row, c + ch, y, x, v);
                }
            }
        }
    }
    Ok(out)
}

/// Whole-stack inference in eval mode. Lights are processed in fixed-size
/// chunks, folding the running elementwise max outside the graph; the fused
/// tensor is identical for any ordering of the stack.
pub fn network_forward<T: Scalar>(
    net: &RmaffPsn,
    store: &mut ParamStore<T>,
    stack: &ImageStack<T>,
) -> NetResult<NormalMap<T>> {
    if stack.lights().intensities().iter().any(|&s| s != T::one()) {
        return Err(NetError::Input(
            "stack must be intensity-normalized before inference".into(),
        ));
    }
    let (h, w) = (stack.height(), stack.width());
    let mut fused: Option<Vec<T>> = None;
    let m = stack.len();
    for chunk_start in (0..m).step_by(INFER_CHUNK) {
        let chunk_end = (chunk_start + INFER_CHUNK).min(m);
        let pairs: Vec<(&Image<T>, Vec3<T>)> = (chunk_start..chunk_end)
            .map(|j| (stack.image(j), stack.lights().direction(j)))
            .collect();
        let input = assemble_inputs(&pairs)?;
        let mut g = Graph::new();
        let xid = g.leaf(input, false);
        let feat = net.extractor.forward(&mut g, store, xid, Mode::Eval)?;
        let fs = g.shape(feat);
        let plane = fs.c * fs.h * fs.w;
        let data = g.value(feat).data();
        let acc = fused.get_or_insert_with(|| vec![T::neg_infinity(); plane]);
        for row in 0..fs.n {
            let sample = &data[row * plane..(row + 1) * plane];
            for (a, &v) in acc.iter_mut().zip(sample) {
                if v > *a {
                    *a = v;
                }
            }
        }
    }
    let mut fused = fused.ok_or_else(|| NetError::Input("empty stack".into()))?;
    for v in &mut fused {
        if *v == T::zero() {
            *v = T::zero(); // canonicalize -0 so permutations stay bitwise equal
        }
    }
    let fused = Tensor::from_vec(Shape::new(1, net.cfg.c_fused, h, w), fused)
        .map_err(NetError::Engine)?;
    let mut g = Graph::new();
    let fid = g.leaf(fused, false);
    let pred = net.regressor.forward(&mut g, store, fid, Mode::Eval)?;
    let out = g.value(pred);
    let mut normals = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            normals.push(Vec3::new(out.at(0, 0, y, x), out.at(0, 1, y, x), out.at(0, 2, y, x)));
        }
    }
    Ok(NormalMap::from_parts(w, h, normals, stack.mask().to_vec())?)
}
