use ps_core::Rng;

use crate::error::EngineResult;
use crate::graph::{Graph, NodeId};
use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub enum Mode {
    Train,
    Eval,
}

/// He-style init: zero-mean normal with variance 2 / fan_in.
pub fn he_weights<T: Scalar>(shape: Shape, fan_in: usize, rng: &mut Rng) -> Tensor<T> {
    let std = (2.0 / fan_in as f64).sqrt();
    Tensor::from_fn(shape, |_| T::of(rng.gaussian_f64() * std))
}

#[derive(Clone, Debug)]
pub struct Conv2d {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    name: String,
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        scope: &str,
        c_in: usize,
        c_out: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        bias: bool,
        rng: &mut Rng,
    ) -> Self {
        let weight = store.add(
            format!("{scope}.weight"),
            he_weights(Shape::new(c_out, c_in, kh, kw), c_in * kh * kw, rng),
            true,
        );
        let bias = bias.then(|| {
            store.add(format!("{scope}.bias"), Tensor::zeros(Shape::new(1, c_out, 1, 1)), true)
        });
        Conv2d { weight, bias, stride, name: scope.to_string() }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
    ) -> EngineResult<NodeId> {
        let w = g.param(store, self.weight);
        let b = self.bias.map(|bid| g.param(store, bid));
        g.conv2d(x, w, b, self.stride).map_err(|e| e.in_layer(&self.name))
    }
}

#[derive(Clone, Debug)]
pub struct BatchNorm2d {
    pub gamma: ParamId,
    pub beta: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    pub eps: f64,
    pub momentum: f64,
    name: String,
}

impl BatchNorm2d {
    pub fn new<T: Scalar>(store: &mut ParamStore<T>, scope: &str, channels: usize) -> Self {
        let shape = Shape::new(1, channels, 1, 1);
        BatchNorm2d {
            gamma: store.add(format!("{scope}.gamma"), Tensor::filled(shape, T::one()), true),
            beta: store.add(format!("{scope}.beta"), Tensor::zeros(shape), true),
            running_mean: store.add(format!("{scope}.running_mean"), Tensor::zeros(shape), false),
            running_var: store.add(
                format!("{scope}.running_var"),
                Tensor::filled(shape, T::one()),
                false,
            ),
            eps: 1e-5,
            momentum: 0.1,
            name: scope.to_string(),
        }
    }

    /// Train mode normalizes by batch statistics and folds them into the
    /// running stats; eval mode is a fixed per-channel affine map.
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        x: NodeId,
        mode: Mode,
    ) -> EngineResult<NodeId> {
        let gamma = g.param(store, self.gamma);
        let beta = g.param(store, self.beta);
        let eps = T::of(self.eps);
        match mode {
            Mode::Train => {
                let count = {
                    let s = g.shape(x);
                    s.n * s.plane()
                };
                let (y, mean, var) = g
                    .batch_norm_train(x, gamma, beta, eps)
                    .map_err(|e| e.in_layer(&self.name))?;
                let m = T::of(self.momentum);
                let one_m = T::one() - m;
                // Running variance uses the unbiased estimate.
                let correction = if count > 1 {
                    T::of(count as f64 / (count as f64 - 1.0))
                } else {
                    T::one()
                };
                let rm = store.value_mut(self.running_mean).data_mut();
                for (r, b) in rm.iter_mut().zip(&mean) {
                    *r = one_m * *r + m * *b;
                }
                let rv = store.value_mut(self.running_var).data_mut();
                for (r, b) in rv.iter_mut().zip(&var) {
                    *r = one_m * *r + m * *b * correction;
                }
                Ok(y)
            }
            Mode::Eval => {
                let mean = store.value(self.running_mean).data().to_vec();
                let var = store.value(self.running_var).data().to_vec();
                g.batch_norm_eval(x, gamma, beta, &mean, &var, eps)
                    .map_err(|e| e.in_layer(&self.name))
            }
        }
    }
}

#[derive(Clone, Debug)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    name: String,
}

impl Linear {
    pub fn new<T: Scalar>(
        store: &mut ParamStore<T>,
        scope: &str,
        c_in: usize,
        c_out: usize,
        bias: bool,
        rng: &mut Rng,
    ) -> Self {
        let weight = store.add(
            format!("{scope}.weight"),
            he_weights(Shape::new(c_out, c_in, 1, 1), c_in, rng),
            true,
        );
        let bias = bias.then(|| {
            store.add(format!("{scope}.bias"), Tensor::zeros(Shape::new(1, c_out, 1, 1)), true)
        });
        Linear { weight, bias, name: scope.to_string() }
    }

    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: NodeId,
    ) -> EngineResult<NodeId> {
        let w = g.param(store, self.weight);
        let b = self.bias.map(|bid| g.param(store, bid));
        g.linear(x, w, b).map_err(|e| e.in_layer(&self.name))
    }
}

/// The layer inventory as a single dispatchable kind, mirroring what the
/// network needs; used by the gradcheck suite and simple stacks.
#[derive(Clone, Debug)]
pub enum LayerDef {
    Conv(Conv2d),
    BatchNorm(BatchNorm2d),
    LeakyRelu { slope: f64 },
    Sigmoid,
    MaxPool { k: usize, s: usize },
    AvgPool { k: usize, s: usize },
    GlobalAvgPool,
    GlobalMaxPool,
    ChannelMean,
    ChannelMax,
    Upsample2x,
    Linear(Linear),
    L2Norm,
}

impl LayerDef {
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        x: NodeId,
        mode: Mode,
    ) -> EngineResult<NodeId> {
        match self {
            LayerDef::Conv(c) => c.forward(g, store, x),
            LayerDef::BatchNorm(bn) => bn.forward(g, store, x, mode),
            LayerDef::LeakyRelu { slope } => Ok(g.leaky_relu(x, T::of(*slope))),
            LayerDef::Sigmoid => Ok(g.sigmoid(x)),
            LayerDef::MaxPool { k, s } => g.max_pool(x, *k, *s),
            LayerDef::AvgPool { k, s } => g.avg_pool(x, *k, *s),
            LayerDef::GlobalAvgPool => Ok(g.global_avg_pool(x)),
            LayerDef::GlobalMaxPool => Ok(g.global_max_pool(x)),
            LayerDef::ChannelMean => Ok(g.channel_mean(x)),
            LayerDef::ChannelMax => Ok(g.channel_max(x)),
            LayerDef::Upsample2x => Ok(g.upsample_bilinear_2x(x)),
            LayerDef::Linear(l) => l.forward(g, store, x),
            LayerDef::L2Norm => Ok(g.l2norm_channels(x, T::of(1e-12))),
        }
    }
}

#[derive(Clone, Debug, Default)]
pub struct Sequential(pub Vec<LayerDef>);

impl Sequential {
    pub fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        store: &mut ParamStore<T>,
        mut x: NodeId,
        mode: Mode,
    ) -> EngineResult<NodeId> {
        for layer in &self.0 {
            x = layer.forward(g, store, x, mode)?;
        }
        Ok(x)
    }
}
