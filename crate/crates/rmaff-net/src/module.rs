use nn_engine::{BatchNorm2d, Conv2d, Graph, Linear, Mode, NodeId, ParamStore, Scalar};
use ps_core::Rng;

use crate::config::NetworkConfig;
use crate::error::NetResult;

/// Convolution + batchnorm + leaky-relu, the standard block of the network.
#[derive(Clone, Debug)]
pub struct ConvBn {
    conv: Conv2d,
    bn: BatchNorm2d,
    slope: f64,
}

impl ConvBn {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        scope: &str,
        c_in: usize,
        c_out: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        slope: f64,
        rng: &mut Rng,
    ) -> Self {
        ConvBn {
            conv: Conv2d::new(store, &format!("{scope}.conv"), c_in, c_out, kh, kw, stride, false, rng),
            bn: BatchNorm2d::new(store, &format!("{scope}.bn"), c_out),
            slope,
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        x: NodeId,
        mode: Mode,
    ) -> NetResult<NodeId> {
        let x = self.conv.forward(g, store, x)?;
        let x = self.bn.forward(g, store, x, mode)?;
        Ok(g.leaky_relu(x, T::of(self.slope)))
    }
}

/// 1x1 channel exchange followed by 1x3 and 3x1 asymmetric convolutions,
/// each with batchnorm and leaky-relu.
#[derive(Clone, Debug)]
pub struct AsyConv {
    point: ConvBn,
    horizontal: ConvBn,
    vertical: ConvBn,
}

impl AsyConv {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        scope: &str,
        c_in: usize,
        c_out: usize,
        slope: f64,
        rng: &mut Rng,
    ) -> Self {
        AsyConv {
            point: ConvBn::new(store, &format!("{scope}.point"), c_in, c_out, 1, 1, 1, slope, rng),
            horizontal: ConvBn::new(store, &format!("{scope}.h"), c_out, c_out, 1, 3, 1, slope, rng),
            vertical: ConvBn::new(store, &format!("{scope}.v"), c_out, c_out, 3, 1, 1, slope, rng),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        x: NodeId,
        mode: Mode,
    ) -> NetResult<NodeId> {
        let x = self.point.forward(g, store, x, mode)?;
        let x = self.horizontal.forward(g, store, x, mode)?;
        self.vertical.forward(g, store, x, mode)
    }
}

/// Gate over channels: sigmoid(MLP(gap) + MLP(gmp)) with a shared two-layer
/// MLP, broadcast-multiplied onto the feature map.
#[derive(Clone, Debug)]
pub struct ChannelAttention {
    fc1: Linear,
    fc2: Linear,
    slope: f64,
}

impl ChannelAttention {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        scope: &str,
        channels: usize,
        reduction: usize,
        slope: f64,
        rng: &mut Rng,
    ) -> Self {
        let hidden = channels / reduction;
        ChannelAttention {
            fc1: Linear::new(store, &format!("{scope}.fc1"), channels, hidden, true, rng),
            fc2: Linear::new(store, &format!("{scope}.fc2"), hidden, channels, true, rng),
            slope,
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        x: NodeId,
    ) -> NetResult<NodeId> {
        let gap = g.global_avg_pool(x);
        let gmp = g.global_max_pool(x);
        let mut paths = Vec::with_capacity(2);
        for pooled in [gap, gmp] {
            let h = self.fc1.forward(g, store, pooled)?;
            let h = g.leaky_relu(h, T::of(self.slope));
            paths.push(self.fc2.forward(g, store, h)?);
        }
        let sum = g.add(paths[0], paths[1])?;
        let gate = g.sigmoid(sum);
        Ok(g.mul_gate_channels(x, gate)?)
    }
}

/// Gate over positions: sigmoid(conv_kxk(concat(channel-mean, channel-max))),
/// broadcast-multiplied onto the feature map.
#[derive(Clone, Debug)]
pub struct SpatialAttention {
    conv: Conv2d,
}

impl SpatialAttention {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        scope: &str,
        kernel: usize,
        rng: &mut Rng,
    ) -> Self {
        SpatialAttention {
            conv: Conv2d::new(store, &format!("{scope}.conv"), 2, 1, kernel, kernel, 1, true, rng),
        }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        x: NodeId,
    ) -> NetResult<NodeId> {
        let mean = g.channel_mean(x);
        let max = g.channel_max(x);
        let stat = g.concat_channels(&[mean, max])?;
        let conv = self.conv.forward(g, store, stat)?;
        let gate = g.sigmoid(conv);
        Ok(g.mul_gate_spatial(x, gate)?)
    }
}

/// Residual multi-scale attention feature fusion: four cascaded asymmetric
/// branches, channel then spatial attention over their concatenation, and a
/// residual 1x1 path:
/// out = conv1x1(x) + conv3x3(attention(cat(branches))).
#[derive(Clone, Debug)]
pub struct RmaffModule {
    width_match: Option<Conv2d>,
    branches: Vec<AsyConv>,
    channel_attention: Option<ChannelAttention>,
    spatial_attention: Option<SpatialAttention>,
    residual: Conv2d,
    project: Conv2d,
}

impl RmaffModule {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        scope: &str,
        c_in: usize,
        c_out: usize,
        cfg: &NetworkConfig,
        attention: bool,
        rng: &mut Rng,
    ) -> Self {
        let cb = cfg.c_branch;
        let width_match = (c_in != cb).then(|| {
            Conv2d::new(store, &format!("{scope}.width_match"), c_in, cb, 1, 1, 1, false, rng)
        });
        let mut branches = Vec::with_capacity(4);
        for j in 0..4 {
            let input = if j == 0 { c_in } else { cb };
            branches.push(AsyConv::new(
                store,
                &format!("{scope}.branch{j}"),
                input,
                cb,
                cfg.lrelu_slope,
                rng,
            ));
        }
        let cat = 4 * cb;
        let channel_attention = attention.then(|| {
            ChannelAttention::new(
                store,
                &format!("{scope}.ca"),
                cat,
                cfg.attention_reduction,
                cfg.lrelu_slope,
                rng,
            )
        });
        let spatial_attention = attention
            .then(|| SpatialAttention::new(store, &format!("{scope}.sa"), cfg.spatial_kernel, rng));
        let residual =
            Conv2d::new(store, &format!("{scope}.residual"), c_in, c_out, 1, 1, 1, true, rng);
        let project = Conv2d::new(store, &format!("{scope}.project"), cat, c_out, 3, 3, 1, true, rng);
        RmaffModule { width_match, branches, channel_attention, spatial_attention, residual, project }
    }

    /// The four cascaded branch outputs: branch 1 reads the input directly;
    /// each later branch reads the (width-matched) input summed with its
    /// predecessor's output.
    pub fn branch_outputs<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        x: NodeId,
        mode: Mode,
    ) -> NetResult<Vec<NodeId>> {
        let matched = match &self.width_match {
            Some(wm) => wm.forward(g, store, x)?,
            None => x,
        };
        let mut outs: Vec<NodeId> = Vec::with_capacity(4);
        for (j, branch) in self.branches.iter().enumerate() {
            let input = if j == 0 {
                x
            } else {
                g.add(matched, outs[j - 1])?
            };
            outs.push(branch.forward(g, store, input, mode)?);
        }
        Ok(outs)
    }

    /// Channel then spatial attention (identity when attention is disabled).
    pub fn attend<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        cat: NodeId,
    ) -> NetResult<NodeId> {
        let mut x = cat;
        if let Some(ca) = &self.channel_attention {
            x = ca.forward(g, store, x)?;
        }
        if let Some(sa) = &self.spatial_attention {
            x = sa.forward(g, store, x)?;
        }
        Ok(x)
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        x: NodeId,
        mode: Mode,
    ) -> NetResult<NodeId> {
        let branches = self.branch_outputs(g, store, x, mode)?;
        let cat = g.concat_channels(&branches)?;
        let attended = self.attend(g, store, cat)?;
        let main = self.project.forward(g, store, attended)?;
        let res = self.residual.forward(g, store, x)?;
        Ok(g.add(res, main)?)
    }

    pub fn project_conv(&self) -> &Conv2d {
        &self.project
    }

    pub fn residual_conv(&self) -> &Conv2d {
        &self.residual
    }

    pub fn width_match_conv(&self) -> Option<&Conv2d> {
        self.width_match.as_ref()
    }

    pub fn branch_convs(&self) -> &[AsyConv] {
        &self.branches
    }

    /// Parameter ids of the attention gates, if built.
    pub fn attention_param_ids(&self) -> Vec<nn_engine::ParamId> {
        let mut ids = Vec::new();
        if let Some(ca) = &self.channel_attention {
            ids.push(ca.fc1.weight);
            if let Some(b) = ca.fc1.bias {
                ids.push(b);
            }
            ids.push(ca.fc2.weight);
            if let Some(b) = ca.fc2.bias {
                ids.push(b);
            }
        }
        if let Some(sa) = &self.spatial_attention {
            ids.push(sa.conv.weight);
            if let Some(b) = sa.conv.bias {
                ids.push(b);
            }
        }
        ids
    }
}
