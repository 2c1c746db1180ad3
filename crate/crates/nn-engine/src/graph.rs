use std::collections::HashMap;

use crate::error::{EngineError, EngineResult};
use crate::kernels;
use crate::params::{ParamId, ParamStore};
use crate::scalar::{gemm, Scalar};
use crate::tensor::{Shape, Tensor};

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct NodeId(usize);

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Conv2d { stride: usize },
    Linear,
    BatchNorm { train: bool, mean: Vec<T>, invstd: Vec<T> },
    LeakyRelu { slope: T },
    Sigmoid,
    MaxPool { argmax: Vec<u32> },
    AvgPool { k: usize, s: usize },
    GlobalAvgPool,
    GlobalMaxPool { argmax: Vec<u32> },
    ChannelMean,
    ChannelMax { argmax: Vec<u32> },
    ChannelSum,
    Upsample2x,
    L2Norm { eps: T },
    Add,
    Mul,
    MulGateC,
    MulGateS,
    ConcatC,
    MaxMany { argmax: Vec<u16> },
    CropTo,
    Affine { a: T },
    SumAll,
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    parents: Vec<NodeId>,
    needs_grad: bool,
}

/// Closeness of the forward pass to non-differentiable points; used by the
/// gradient checker to reject configurations where finite differences are
/// meaningless.
#[derive(Clone, Copy, Debug)]
pub struct KinkReport {
    /// Min |pre-activation| over every leaky-relu input.
    pub min_relu_margin: f64,
    /// Min (best - runner-up) over every max selection.
    pub min_max_margin: f64,
    /// Min channel-vector norm seen by l2norm.
    pub min_norm: f64,
}

impl Default for KinkReport {
    fn default() -> Self {
        KinkReport {
            min_relu_margin: f64::INFINITY,
            min_max_margin: f64::INFINITY,
            min_norm: f64::INFINITY,
        }
    }
}

/// Reverse-mode tape: ops append nodes in topological order; backward walks
/// the tape once in reverse, accumulating gradients over fan-out.
pub struct Graph<T: Scalar> {
    nodes: Vec<Node<T>>,
    grads: Vec<Option<Tensor<T>>>,
    param_nodes: HashMap<ParamId, NodeId>,
    pub track_kinks: bool,
    kinks: KinkReport,
}

impl<T: Scalar> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph {
            nodes: Vec::new(),
            grads: Vec::new(),
            param_nodes: HashMap::new(),
            track_kinks: false,
            kinks: KinkReport::default(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn kinks(&self) -> KinkReport {
        self.kinks
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> Option<&Tensor<T>> {
        self.grads[id.0].as_ref()
    }

    pub fn shape(&self, id: NodeId) -> Shape {
        self.nodes[id.0].value.shape()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, parents: Vec<NodeId>) -> NodeId {
        let needs_grad = match op {
            Op::Leaf => false, // set by leaf()
            _ => parents.iter().any(|p| self.nodes[p.0].needs_grad),
        };
        self.nodes.push(Node { value, op, parents, needs_grad });
        self.grads.push(None);
        NodeId(self.nodes.len() - 1)
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> NodeId {
        let id = self.push(value, Op::Leaf, vec![]);
        self.nodes[id.0].needs_grad = requires_grad;
        id
    }

    /// Leases a stored parameter into the graph, memoized so repeated uses
    /// share one leaf and fan-out accumulation sums their gradients.
    pub fn param(&mut self, store: &ParamStore<T>, id: ParamId) -> NodeId {
        if let Some(&nid) = self.param_nodes.get(&id) {
            return nid;
        }
        let entry = store.get(id);
        let nid = self.leaf(entry.value.clone(), entry.trainable);
        self.param_nodes.insert(id, nid);
        nid
    }

    /// Adds every leased parameter's gradient back into the store.
    pub fn collect_param_grads(&self, store: &mut ParamStore<T>) {
        let mut ids: Vec<(ParamId, NodeId)> =
            self.param_nodes.iter().map(|(&p, &n)| (p, n)).collect();
        ids.sort_by_key(|(_, n)| n.0);
        for (pid, nid) in ids {
            if let Some(g) = self.grads[nid.0].as_ref() {
                store.accumulate_grad(pid, g);
            }
        }
    }

    // ---- forward ops ----

    pub fn conv2d(
        &mut self,
        x: NodeId,
        w: NodeId,
        b: Option<NodeId>,
        stride: usize,
    ) -> EngineResult<NodeId> {
        let out = kernels::conv2d_forward(
            self.value(x),
            self.value(w),
            b.map(|bid| self.value(bid)),
            stride,
        )?;
        let mut parents = vec![x, w];
        if let Some(bid) = b {
            parents.push(bid);
        }
        Ok(self.push(out, Op::Conv2d { stride }, parents))
    }

    /// Fully-connected on (n, c, 1, 1) activations.
    pub fn linear(&mut self, x: NodeId, w: NodeId, b: Option<NodeId>) -> EngineResult<NodeId> {
        let xs = self.shape(x);
        let ws = self.shape(w);
        if xs.h != 1 || xs.w != 1 {
            return Err(EngineError::ShapeMismatch(format!(
                "linear expects (n,c,1,1) input, got {xs}"
            )));
        }
        if ws.c != xs.c || ws.h != 1 || ws.w != 1 {
            return Err(EngineError::ShapeMismatch(format!(
                "linear weight {ws} incompatible with input {xs}"
            )));
        }
        let (n, ci, co) = (xs.n, xs.c, ws.n);
        let mut out = Tensor::zeros(Shape::new(n, co, 1, 1));
        gemm(n, ci, co, T::one(), self.value(x).data(), false, self.value(w).data(), true, T::zero(), out.data_mut());
        if let Some(bid) = b {
            let bs = self.shape(bid);
            if bs.len() != co {
                return Err(EngineError::ShapeMismatch(format!(
                    "linear bias {bs} expects {co} values"
                )));
            }
            let bd = self.value(bid).data().to_vec();
            for s in 0..n {
                for c in 0..co {
                    out.data_mut()[s * co + c] += bd[c];
                }
            }
        }
        let mut parents = vec![x, w];
        if let Some(bid) = b {
            parents.push(bid);
        }
        Ok(self.push(out, Op::Linear, parents))
    }

    /// Batch statistics over (n, h, w) per channel; returns the node plus the
    /// biased batch mean/variance for running-stat updates by the caller.
    pub fn batch_norm_train(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        eps: T,
    ) -> EngineResult<(NodeId, Vec<T>, Vec<T>)> {
        let xs = self.shape(x);
        self.check_affine_params(xs, gamma, beta)?;
        let count = xs.n * xs.plane();
        if count == 0 {
            return Err(EngineError::ShapeMismatch("batchnorm on empty tensor".into()));
        }
        let inv_count = T::one() / T::of(count as f64);
        let mut mean = vec![T::zero(); xs.c];
        let mut var = vec![T::zero(); xs.c];
        {
            let xd = self.value(x).data();
            for c in 0..xs.c {
                let mut acc = T::zero();
                for s in 0..xs.n {
                    let base = (s * xs.c + c) * xs.plane();
                    let mut part = T::zero();
                    for v in &xd[base..base + xs.plane()] {
                        part += *v;
                    }
                    acc += part;
                }
                let mu = acc * inv_count;
                let mut acc2 = T::zero();
                for s in 0..xs.n {
                    let base = (s * xs.c + c) * xs.plane();
                    let mut part = T::zero();
                    for v in &xd[base..base + xs.plane()] {
                        let d = *v - mu;
                        part += d * d;
                    }
                    acc2 += part;
                }
                mean[c] = mu;
                var[c] = acc2 * inv_count;
            }
        }
        let invstd: Vec<T> = var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let out = self.bn_apply(x, gamma, beta, &mean, &invstd);
        let id = self.push(
            out,
            Op::BatchNorm { train: true, mean: mean.clone(), invstd },
            vec![x, gamma, beta],
        );
        Ok((id, mean, var))
    }

    /// Normalization by fixed (running) statistics: a per-channel affine map.
    pub fn batch_norm_eval(
        &mut self,
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        running_mean: &[T],
        running_var: &[T],
        eps: T,
    ) -> EngineResult<NodeId> {
        let xs = self.shape(x);
        self.check_affine_params(xs, gamma, beta)?;
        if running_mean.len() != xs.c || running_var.len() != xs.c {
            return Err(EngineError::ShapeMismatch(format!(
                "running stats cover {} channels, input has {}",
                running_mean.len(),
                xs.c
            )));
        }
        let invstd: Vec<T> = running_var.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
        let out = self.bn_apply(x, gamma, beta, running_mean, &invstd);
        Ok(self.push(
            out,
            Op::BatchNorm { train: false, mean: running_mean.to_vec(), invstd },
            vec![x, gamma, beta],
        ))
    }

    fn check_affine_params(&self, xs: Shape, gamma: NodeId, beta: NodeId) -> EngineResult<()> {
        for (name, id) in [("gamma", gamma), ("beta", beta)] {
            let s = self.shape(id);
            if s.len() != xs.c {
                return Err(EngineError::ShapeMismatch(format!(
                    "batchnorm {name} has {} values, input {xs} has {} channels",
                    s.len(),
                    xs.c
                )));
            }
        }
        Ok(())
    }

    fn bn_apply(&self, x: NodeId, gamma: NodeId, beta: NodeId, mean: &[T], invstd: &[T]) -> Tensor<T> {
        let xs = self.shape(x);
        let xd = self.value(x).data();
        let g = self.value(gamma).data();
        let b = self.value(beta).data();
        let mut out = Tensor::zeros(xs);
        let plane = xs.plane();
        let od = out.data_mut();
        for s in 0..xs.n {
            for c in 0..xs.c {
                let base = (s * xs.c + c) * plane;
                let scale = g[c] * invstd[c];
                let shift = b[c] - mean[c] * scale;
                for i in base..base + plane {
                    od[i] = xd[i] * scale + shift;
                }
            }
        }
        out
    }

    pub fn leaky_relu(&mut self, x: NodeId, slope: T) -> NodeId {
        let xv = self.value(x);
        let out = Tensor::from_vec(
            xv.shape(),
            xv.data().iter().map(|&v| if v > T::zero() { v } else { slope * v }).collect(),
        )
        .expect("same length");
        if self.track_kinks {
            let mut m = self.kinks.min_relu_margin;
            for v in self.value(x).data() {
                m = m.min(v.as_f64().abs());
            }
            self.kinks.min_relu_margin = m;
        }
        self.push(out, Op::LeakyRelu { slope }, vec![x])
    }

    pub fn sigmoid(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let out = Tensor::from_vec(
            xv.shape(),
            xv.data()
                .iter()
                .map(|&v| {
                    if v >= T::zero() {
                        T::one() / (T::one() + (-v).exp())
                    } else {
                        let e = v.exp();
                        e / (T::one() + e)
                    }
                })
                .collect(),
        )
        .expect("same length");
        self.push(out, Op::Sigmoid, vec![x])
    }

    pub fn max_pool(&mut self, x: NodeId, k: usize, s: usize) -> EngineResult<NodeId> {
        let xs = self.shape(x);
        if xs.h < k || xs.w < k {
            return Err(EngineError::ShapeMismatch(format!("max_pool {k}x{k} on {xs}")));
        }
        let (oh, ow) = ((xs.h - k) / s + 1, (xs.w - k) / s + 1);
        let mut out = Tensor::zeros(Shape::new(xs.n, xs.c, oh, ow));
        let mut argmax = vec![0u32; xs.n * xs.c * oh * ow];
        let xd = self.value(x).data();
        let mut margin = f64::INFINITY;
        {
            let od = out.data_mut();
            let mut oi = 0usize;
            for nc in 0..xs.n * xs.c {
                let plane = &xd[nc * xs.plane()..(nc + 1) * xs.plane()];
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = T::neg_infinity();
                        let mut second = T::neg_infinity();
                        let mut best_idx = 0u32;
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = oy * s + ky;
                                let ix = ox * s + kx;
                                let v = plane[iy * xs.w + ix];
                                if v > best {
                                    second = best;
                                    best = v;
                                    best_idx = (iy * xs.w + ix) as u32;
                                } else if v > second {
                                    second = v;
                                }
                            }
                        }
                        od[oi] = best;
                        argmax[oi] = best_idx;
                        if self.track_kinks && second.is_finite() {
                            margin = margin.min((best - second).as_f64());
                        }
                        oi += 1;
                    }
                }
            }
        }
        if self.track_kinks {
            self.kinks.min_max_margin = self.kinks.min_max_margin.min(margin);
        }
        Ok(self.push(out, Op::MaxPool { argmax }, vec![x]))
    }

    pub fn avg_pool(&mut self, x: NodeId, k: usize, s: usize) -> EngineResult<NodeId> {
        let xs = self.shape(x);
        if xs.h < k || xs.w < k {
            return Err(EngineError::ShapeMismatch(format!("avg_pool {k}x{k} on {xs}")));
        }
        let (oh, ow) = ((xs.h - k) / s + 1, (xs.w - k) / s + 1);
        let inv = T::one() / T::of((k * k) as f64);
        let mut out = Tensor::zeros(Shape::new(xs.n, xs.c, oh, ow));
        let xd = self.value(x).data();
        let od = out.data_mut();
        let mut oi = 0usize;
        for nc in 0..xs.n * xs.c {
            let plane = &xd[nc * xs.plane()..(nc + 1) * xs.plane()];
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = T::zero();
                    for ky in 0..k {
                        for kx in 0..k {
                            acc += plane[(oy * s + ky) * xs.w + (ox * s + kx)];
                        }
                    }
                    od[oi] = acc * inv;
                    oi += 1;
                }
            }
        }
        Ok(self.push(out, Op::AvgPool { k, s }, vec![x]))
    }

    pub fn global_avg_pool(&mut self, x: NodeId) -> NodeId {
        let xs = self.shape(x);
        let inv = T::one() / T::of(xs.plane() as f64);
        let xd = self.value(x).data();
        let mut out = Tensor::zeros(Shape::new(xs.n, xs.c, 1, 1));
        for nc in 0..xs.n * xs.c {
            let mut acc = T::zero();
            for v in &xd[nc * xs.plane()..(nc + 1) * xs.plane()] {
                acc += *v;
            }
            out.data_mut()[nc] = acc * inv;
        }
        self.push(out, Op::GlobalAvgPool, vec![x])
    }

    pub fn global_max_pool(&mut self, x: NodeId) -> NodeId {
        let xs = self.shape(x);
        let xd = self.value(x).data();
        let mut out = Tensor::zeros(Shape::new(xs.n, xs.c, 1, 1));
        let mut argmax = vec![0u32; xs.n * xs.c];
        let mut margin = f64::INFINITY;
        for nc in 0..xs.n * xs.c {
            let plane = &xd[nc * xs.plane()..(nc + 1) * xs.plane()];
            let mut best = T::neg_infinity();
            let mut second = T::neg_infinity();
            let mut best_idx = 0u32;
            for (i, &v) in plane.iter().enumerate() {
                if v > best {
                    second = best;
                    best = v;
                    best_idx = i as u32;
                } else if v > second {
                    second = v;
                }
            }
            out.data_mut()[nc] = best;
            argmax[nc] = best_idx;
            if self.track_kinks && second.is_finite() {
                margin = margin.min((best - second).as_f64());
            }
        }
        if self.track_kinks {
            self.kinks.min_max_margin = self.kinks.min_max_margin.min(margin);
        }
        self.push(out, Op::GlobalMaxPool { argmax }, vec![x])
    }

    pub fn channel_mean(&mut self, x: NodeId) -> NodeId {
        let xs = self.shape(x);
        let inv = T::one() / T::of(xs.c as f64);
        let xd = self.value(x).data();
        let mut out = Tensor::zeros(Shape::new(xs.n, 1, xs.h, xs.w));
        for s in 0..xs.n {
            for p in 0..xs.plane() {
                let mut acc = T::zero();
                for c in 0..xs.c {
                    acc += xd[(s * xs.c + c) * xs.plane() + p];
                }
                out.data_mut()[s * xs.plane() + p] = acc * inv;
            }
        }
        self.push(out, Op::ChannelMean, vec![x])
    }

    pub fn channel_sum(&mut self, x: NodeId) -> NodeId {
        let xs = self.shape(x);
        let xd = self.value(x).data();
        let mut out = Tensor::zeros(Shape::new(xs.n, 1, xs.h, xs.w));
        for s in 0..xs.n {
            for p in 0..xs.plane() {
                let mut acc = T::zero();
                for c in 0..xs.c {
                    acc += xd[(s * xs.c + c) * xs.plane() + p];
                }
                out.data_mut()[s * xs.plane() + p] = acc;
            }
        }
        self.push(out, Op::ChannelSum, vec![x])
    }

    pub fn channel_max(&mut self, x: NodeId) -> NodeId {
        let xs = self.shape(x);
        let xd = self.value(x).data();
        let mut out = Tensor::zeros(Shape::new(xs.n, 1, xs.h, xs.w));
        let mut argmax = vec![0u32; xs.n * xs.plane()];
        let mut margin = f64::INFINITY;
        for s in 0..xs.n {
            for p in 0..xs.plane() {
                let mut best = T::neg_infinity();
                let mut second = T::neg_infinity();
                let mut best_c = 0u32;
                for c in 0..xs.c {
                    let v = xd[(s * xs.c + c) * xs.plane() + p];
                    if v > best {
                        second = best;
                        best = v;
                        best_c = c as u32;
                    } else if v > second {
                        second = v;
                    }
                }
                out.data_mut()[s * xs.plane() + p] = best;
                argmax[s * xs.plane() + p] = best_c;
                if self.track_kinks && second.is_finite() {
                    margin = margin.min((best - second).as_f64());
                }
            }
        }
        if self.track_kinks {
            self.kinks.min_max_margin = self.kinks.min_max_margin.min(margin);
        }
        self.push(out, Op::ChannelMax { argmax }, vec![x])
    }

    /// Bilinear x2 upsampling (align_corners = false).
    pub fn upsample_bilinear_2x(&mut self, x: NodeId) -> NodeId {
        let xs = self.shape(x);
        let (oh, ow) = (xs.h * 2, xs.w * 2);
        let ty = kernels::up2_table(xs.h, oh);
        let tx = kernels::up2_table(xs.w, ow);
        let xd = self.value(x).data();
        let mut out = Tensor::zeros(Shape::new(xs.n, xs.c, oh, ow));
        let od = out.data_mut();
        for nc in 0..xs.n * xs.c {
            let src = &xd[nc * xs.plane()..(nc + 1) * xs.plane()];
            let dst = &mut od[nc * oh * ow..(nc + 1) * oh * ow];
            for oy in 0..oh {
                let (y0, y1, fy) = ty[oy];
                let fy = T::of(fy);
                for ox in 0..ow {
                    let (x0, x1, fx) = tx[ox];
                    let fx = T::of(fx);
                    let one = T::one();
                    let top = src[y0 * xs.w + x0] * (one - fx) + src[y0 * xs.w + x1] * fx;
                    let bot = src[y1 * xs.w + x0] * (one - fx) + src[y1 * xs.w + x1] * fx;
                    dst[oy * ow + ox] = top * (one - fy) + bot * fy;
                }
            }
        }
        self.push(out, Op::Upsample2x, vec![x])
    }

    /// Divides each spatial position's channel vector by max(norm, eps).
    pub fn l2norm_channels(&mut self, x: NodeId, eps: T) -> NodeId {
        let xs = self.shape(x);
        let xd = self.value(x).data();
        let mut out = Tensor::zeros(xs);
        let mut min_norm = f64::INFINITY;
        {
            let od = out.data_mut();
            for s in 0..xs.n {
                for p in 0..xs.plane() {
                    let mut sq = T::zero();
                    for c in 0..xs.c {
                        let v = xd[(s * xs.c + c) * xs.plane() + p];
                        sq += v * v;
                    }
                    let norm = sq.sqrt();
                    min_norm = min_norm.min(norm.as_f64());
                    let denom = if norm > eps { norm } else { eps };
                    for c in 0..xs.c {
                        let i = (s * xs.c + c) * xs.plane() + p;
                        od[i] = xd[i] / denom;
                    }
                }
            }
        }
        if self.track_kinks {
            self.kinks.min_norm = self.kinks.min_norm.min(min_norm);
        }
        self.push(out, Op::L2Norm { eps }, vec![x])
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> EngineResult<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(EngineError::ShapeMismatch(format!("add {sa} vs {sb}")));
        }
        let out = Tensor::from_vec(
            sa,
            self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x + y).collect(),
        )
        .expect("same length");
        Ok(self.push(out, Op::Add, vec![a, b]))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> EngineResult<NodeId> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa != sb {
            return Err(EngineError::ShapeMismatch(format!("mul {sa} vs {sb}")));
        }
        let out = Tensor::from_vec(
            sa,
            self.value(a).data().iter().zip(self.value(b).data()).map(|(&x, &y)| x * y).collect(),
        )
        .expect("same length");
        Ok(self.push(out, Op::Mul, vec![a, b]))
    }

    /// x (n,c,h,w) gated by (n,c,1,1), the channel-attention broadcast.
    pub fn mul_gate_channels(&mut self, x: NodeId, gate: NodeId) -> EngineResult<NodeId> {
        let (xs, gs) = (self.shape(x), self.shape(gate));
        if gs.n != xs.n || gs.c != xs.c || gs.h != 1 || gs.w != 1 {
            return Err(EngineError::ShapeMismatch(format!(
                "channel gate {gs} incompatible with {xs}"
            )));
        }
        let xd = self.value(x).data();
        let gd = self.value(gate).data();
        let mut out = Tensor::zeros(xs);
        let od = out.data_mut();
        for nc in 0..xs.n * xs.c {
            let g = gd[nc];
            for p in 0..xs.plane() {
                od[nc * xs.plane() + p] = xd[nc * xs.plane() + p] * g;
            }
        }
        Ok(self.push(out, Op::MulGateC, vec![x, gate]))
    }

    /// x (n,c,h,w) gated by (n,1,h,w), the spatial-attention broadcast.
    pub fn mul_gate_spatial(&mut self, x: NodeId, gate: NodeId) -> EngineResult<NodeId> {
        let (xs, gs) = (self.shape(x), self.shape(gate));
        if gs.n != xs.n || gs.c != 1 || gs.h != xs.h || gs.w != xs.w {
            return Err(EngineError::ShapeMismatch(format!(
                "spatial gate {gs} incompatible with {xs}"
            )));
        }
        let xd = self.value(x).data();
        let gd = self.value(gate).data();
        let mut out = Tensor::zeros(xs);
        let od = out.data_mut();
        for s in 0..xs.n {
            for c in 0..xs.c {
                let base = (s * xs.c + c) * xs.plane();
                let gbase = s * xs.plane();
                for p in 0..xs.plane() {
                    od[base + p] = xd[base + p] * gd[gbase + p];
                }
            }
        }
        Ok(self.push(out, Op::MulGateS, vec![x, gate]))
    }

    pub fn concat_channels(&mut self, inputs: &[NodeId]) -> EngineResult<NodeId> {
        if inputs.is_empty() {
            return Err(EngineError::InvalidArgument("concat of zero tensors".into()));
        }
        let first = self.shape(inputs[0]);
        let mut c_total = 0usize;
        for &id in inputs {
            let s = self.shape(id);
            if s.n != first.n || s.h != first.h || s.w != first.w {
                return Err(EngineError::ShapeMismatch(format!("concat {s} vs {first}")));
            }
            c_total += s.c;
        }
        let mut out = Tensor::zeros(Shape::new(first.n, c_total, first.h, first.w));
        {
            let plane = first.plane();
            let od = out.data_mut();
            for s in 0..first.n {
                let mut c_off = 0usize;
                for &id in inputs {
                    let is = self.nodes[id.0].value.shape();
                    let idata = self.nodes[id.0].value.data();
                    let src = &idata[s * is.c * plane..(s + 1) * is.c * plane];
                    let dst = &mut od[(s * c_total + c_off) * plane..(s * c_total + c_off + is.c) * plane];
                    dst.copy_from_slice(src);
                    c_off += is.c;
                }
            }
        }
        Ok(self.push(out, Op::ConcatC, inputs.to_vec()))
    }

    /// Elementwise maximum over equally shaped tensors: the order-agnostic
    /// fusion. Gradient routes to the lowest-index argument achieving the
    /// max; an exact zero result is canonicalized to +0 so permutations stay
    /// bit-identical.
    pub fn max_many(&mut self, inputs: &[NodeId]) -> EngineResult<NodeId> {
        if inputs.is_empty() {
            return Err(EngineError::InvalidArgument("max over zero tensors".into()));
        }
        if inputs.len() > u16::MAX as usize {
            return Err(EngineError::InvalidArgument("too many tensors in max".into()));
        }
        let shape = self.shape(inputs[0]);
        for &id in inputs {
            if self.shape(id) != shape {
                return Err(EngineError::ShapeMismatch(format!(
                    "max over mismatched shapes {} vs {}",
                    self.shape(id),
                    shape
                )));
            }
        }
        let len = shape.len();
        let mut out = vec![T::neg_infinity(); len];
        let mut argmax = vec![0u16; len];
        let mut margin = f64::INFINITY;
        for (k, &id) in inputs.iter().enumerate() {
            let data = self.nodes[id.0].value.data();
            for i in 0..len {
                let v = data[i];
                if v > out[i] {
                    if self.track_kinks && k > 0 {
                        margin = margin.min((v - out[i]).as_f64());
                    }
                    out[i] = v;
                    argmax[i] = k as u16;
                } else if self.track_kinks {
                    margin = margin.min((out[i] - v).as_f64());
                }
            }
        }
        for v in &mut out {
            if *v == T::zero() {
                *v = T::zero(); // -0 -> +0
            }
        }
        if self.track_kinks && inputs.len() > 1 {
            self.kinks.min_max_margin = self.kinks.min_max_margin.min(margin);
        }
        let out = Tensor::from_vec(shape, out).expect("same length");
        Ok(self.push(out, Op::MaxMany { argmax }, inputs.to_vec()))
    }

    /// Top-left spatial crop.
    pub fn crop_to(&mut self, x: NodeId, oh: usize, ow: usize) -> EngineResult<NodeId> {
        let xs = self.shape(x);
        if oh > xs.h || ow > xs.w || oh == 0 || ow == 0 {
            return Err(EngineError::ShapeMismatch(format!("crop {oh}x{ow} from {xs}")));
        }
        if oh == xs.h && ow == xs.w {
            return Ok(x);
        }
        let xd = self.value(x).data();
        let mut out = Tensor::zeros(Shape::new(xs.n, xs.c, oh, ow));
        let od = out.data_mut();
        for nc in 0..xs.n * xs.c {
            for y in 0..oh {
                let src = &xd[nc * xs.plane() + y * xs.w..nc * xs.plane() + y * xs.w + ow];
                od[nc * oh * ow + y * ow..nc * oh * ow + (y + 1) * ow].copy_from_slice(src);
            }
        }
        Ok(self.push(out, Op::CropTo, vec![x]))
    }

    /// a*x + b elementwise.
    pub fn affine(&mut self, x: NodeId, a: T, b: T) -> NodeId {
        let xv = self.value(x);
        let out = Tensor::from_vec(xv.shape(), xv.data().iter().map(|&v| a * v + b).collect())
            .expect("same length");
        self.push(out, Op::Affine { a }, vec![x])
    }

    pub fn scale(&mut self, x: NodeId, a: T) -> NodeId {
        self.affine(x, a, T::zero())
    }

    /// Sum of all elements, as a (1,1,1,1) tensor. Fixed-chunk pairwise
    /// accumulation keeps it deterministic and accurate.
    pub fn sum_all(&mut self, x: NodeId) -> NodeId {
        let xv = self.value(x);
        let mut total = T::zero();
        for chunk in xv.data().chunks(4096) {
            let mut part = T::zero();
            for v in chunk {
                part += *v;
            }
            total += part;
        }
        let out = Tensor::from_vec(Shape::new(1, 1, 1, 1), vec![total]).expect("scalar");
        self.push(out, Op::SumAll, vec![x])
    }

    // ---- backward ----

    pub fn backward(&mut self, loss: NodeId) -> EngineResult<()> {
        if self.shape(loss).len() != 1 {
            return Err(EngineError::NotScalarLoss(self.shape(loss).to_string()));
        }
        if !self.nodes[loss.0].needs_grad {
            return Err(EngineError::DetachedBackward);
        }
        for g in &mut self.grads {
            *g = None;
        }
        self.grads[loss.0] = Some(Tensor::filled(Shape::new(1, 1, 1, 1), T::one()));
        for id in (0..=loss.0).rev() {
            if self.grads[id].is_none() || !self.nodes[id].needs_grad {
                continue;
            }
            let dy = self.grads[id].take().expect("present");
            self.backprop_node(id, &dy)?;
            self.grads[id] = Some(dy);
        }
        Ok(())
    }

    fn parent_needs(&self, id: usize, slot: usize) -> bool {
        let p = self.nodes[id].parents[slot];
        self.nodes[p.0].needs_grad
    }

    fn add_grad(grads: &mut [Option<Tensor<T>>], target: NodeId, shape: Shape, add: impl FnOnce(&mut [T])) {
        let slot = &mut grads[target.0];
        if slot.is_none() {
            *slot = Some(Tensor::zeros(shape));
        }
        add(slot.as_mut().expect("just set").data_mut());
    }

    fn backprop_node(&mut self, id: usize, dy: &Tensor<T>) -> EngineResult<()> {
        let parents = self.nodes[id].parents.clone();
        match &self.nodes[id].op {
            Op::Leaf => {}
            Op::Conv2d { stride } => {
                let stride = *stride;
                let (x, w) = (parents[0], parents[1]);
                let need_dx = self.parent_needs(id, 0);
                let need_dw = self.parent_needs(id, 1);
                let bias = parents.get(2).copied();
                let need_db = bias.map(|_| self.parent_needs(id, 2)).unwrap_or(false);
                let grads = kernels::conv2d_backward(
                    &self.nodes[x.0].value,
                    &self.nodes[w.0].value,
                    dy,
                    stride,
                    need_dx,
                    need_db,
                    bias.map(|b| self.nodes[b.0].value.shape()),
                )?;
                if let (true, Some(dx)) = (need_dx, grads.dx) {
                    Self::add_grad(&mut self.grads, x, self.nodes[x.0].value.shape(), |g| {
                        for (a, b) in g.iter_mut().zip(dx.data()) {
                            *a += *b;
                        }
                    });
                }
                if need_dw {
                    Self::add_grad(&mut self.grads, w, self.nodes[w.0].value.shape(), |g| {
                        for (a, b) in g.iter_mut().zip(grads.dw.data()) {
                            *a += *b;
                        }
                    });
                }
                if let (Some(b), Some(db)) = (bias, grads.db) {
                    Self::add_grad(&mut self.grads, b, self.nodes[b.0].value.shape(), |g| {
                        for (a, v) in g.iter_mut().zip(db.data()) {
                            *a += *v;
                        }
                    });
                }
            }
            Op::Linear => {
                let (x, w) = (parents[0], parents[1]);
                let xs = self.nodes[x.0].value.shape();
                let ws = self.nodes[w.0].value.shape();
                let (n, ci, co) = (xs.n, xs.c, ws.n);
                if self.parent_needs(id, 0) {
                    let mut dx = vec![T::zero(); n * ci];
                    gemm(n, co, ci, T::one(), dy.data(), false, self.nodes[w.0].value.data(), false, T::zero(), &mut dx);
                    Self::add_grad(&mut self.grads, x, xs, |g| {
                        for (a, b) in g.iter_mut().zip(&dx) {
                            *a += *b;
                        }
                    });
                }
                if self.parent_needs(id, 1) {
                    let mut dw = vec![T::zero(); co * ci];
                    gemm(co, n, ci, T::one(), dy.data(), true, self.nodes[x.0].value.data(), false, T::zero(), &mut dw);
                    Self::add_grad(&mut self.grads, w, ws, |g| {
                        for (a, b) in g.iter_mut().zip(&dw) {
                            *a += *b;
                        }
                    });
                }
                if let Some(&b) = parents.get(2) {
                    if self.parent_needs(id, 2) {
                        let bs = self.nodes[b.0].value.shape();
                        Self::add_grad(&mut self.grads, b, bs, |g| {
                            for s in 0..n {
                                for c in 0..co {
                                    g[c] += dy.data()[s * co + c];
                                }
                            }
                        });
                    }
                }
            }
            Op::BatchNorm { train, mean, invstd } => {
                let train = *train;
                let mean = mean.clone();
                let invstd = invstd.clone();
                let (x, gamma, beta) = (parents[0], parents[1], parents[2]);
                let xs = self.nodes[x.0].value.shape();
                let plane = xs.plane();
                let count = T::of((xs.n * plane) as f64);
                let xd = self.nodes[x.0].value.data();
                let gd = self.nodes[gamma.0].value.data();
                // Per-channel reductions.
                let mut sum_dy = vec![T::zero(); xs.c];
                let mut sum_dy_xhat = vec![T::zero(); xs.c];
                for s in 0..xs.n {
                    for c in 0..xs.c {
                        let base = (s * xs.c + c) * plane;
                        let mut a = T::zero();
                        let mut b = T::zero();
                        for i in 0..plane {
                            let g = dy.data()[base + i];
                            a += g;
                            b += g * (xd[base + i] - mean[c]) * invstd[c];
                        }
                        sum_dy[c] += a;
                        sum_dy_xhat[c] += b;
                    }
                }
                if self.parent_needs(id, 1) {
                    let gs = self.nodes[gamma.0].value.shape();
                    Self::add_grad(&mut self.grads, gamma, gs, |g| {
                        for c in 0..xs.c {
                            g[c] += sum_dy_xhat[c];
                        }
                    });
                }
                if self.parent_needs(id, 2) {
                    let bs = self.nodes[beta.0].value.shape();
                    Self::add_grad(&mut self.grads, beta, bs, |g| {
                        for c in 0..xs.c {
                            g[c] += sum_dy[c];
                        }
                    });
                }
                if self.parent_needs(id, 0) {
                    Self::add_grad(&mut self.grads, x, xs, |g| {
                        for s in 0..xs.n {
                            for c in 0..xs.c {
                                let base = (s * xs.c + c) * plane;
                                let scale = gd[c] * invstd[c];
                                if train {
                                    let m_dy = sum_dy[c] / count;
                                    let m_dyx = sum_dy_xhat[c] / count;
                                    for i in 0..plane {
                                        let xhat = (xd[base + i] - mean[c]) * invstd[c];
                                        g[base + i] +=
                                            scale * (dy.data()[base + i] - m_dy - xhat * m_dyx);
                                    }
                                } else {
                                    for i in 0..plane {
                                        g[base + i] += scale * dy.data()[base + i];
                                    }
                                }
                            }
                        }
                    });
                }
            }
            Op::LeakyRelu { slope } => {
                let slope = *slope;
                let x = parents[0];
                let xd = self.nodes[x.0].value.data();
                let xs = self.nodes[x.0].value.shape();
                if self.parent_needs(id, 0) {
                    Self::add_grad(&mut self.grads, x, xs, |g| {
                        for i in 0..g.len() {
                            let f = if xd[i] > T::zero() { T::one() } else { slope };
                            g[i] += dy.data()[i] * f;
                        }
                    });
                }
            }
            Op::Sigmoid => {
                let x = parents[0];
                let yv = self.nodes[id].value.data();
                let xs = self.nodes[x.0].value.shape();
                if self.parent_needs(id, 0) {
                    Self::add_grad(&mut self.grads, x, xs, |g| {
                        for i in 0..g.len() {
                            g[i] += dy.data()[i] * yv[i] * (T::one() - yv[i]);
                        }
                    });
                }
            }
            Op::MaxPool { argmax } => {
                let argmax = argmax.clone();
                let x = parents[0];
                let xs = self.nodes[x.0].value.shape();
                let ys = self.nodes[id].value.shape();
                if self.parent_needs(id, 0) {
                    Self::add_grad(&mut self.grads, x, xs, |g| {
                        for nc in 0..ys.n * ys.c {
                            for p in 0..ys.plane() {
                                let oi = nc * ys.plane() + p;
                                g[nc * xs.plane() + argmax[oi] as usize] += dy.data()[oi];
                            }
                        }
                    });
                }
            }
            Op::AvgPool { k, s } => {
                let (k, s) = (*k, *s);
                let x = parents[0];
                let xs = self.nodes[x.0].value.shape();
                let ys = self.nodes[id].value.shape();
                let inv = T::one() / T::of((k * k) as f64);
                if self.parent_needs(id, 0) {
                    Self::add_grad(&mut self.grads, x, xs, |g| {
                        for nc in 0..ys.n * ys.c {
                            for oy in 0..ys.h {
                                for ox in 0..ys.w {
                                    let v = dy.data()[nc * ys.plane() + oy * ys.w + ox] * inv;
                                    for ky in 0..k {
                                        for kx in 0..k {
                                            g[nc * xs.plane() + (oy * s + ky) * xs.w + (ox * s + kx)] += v;
                                        }
                                    }
                                }
                            }
                        }
                    });
                }
            }
            Op::GlobalAvgPool => {
                let x = parents[0];
                let xs = self.nodes[x.0].value.shape();
                let inv = T::one() / T::of(xs.plane() as f64);
                if self.parent_needs(id, 0) {
                    Self::add_grad(&mut self.grads, x, xs, |g| {
                        for nc in 0..xs.n * xs.c {
                            let v = dy.data()[nc] * inv;
                            for p in 0..xs.plane() {
                                g[nc * xs.plane() + p] += v;
                            }
                        }
                    });
                }
            }
            Op::GlobalMaxPool { argmax } => {
                let argmax = argmax.clone();
                let x = parents[0];
                let xs = self.nodes[x.0].value.shape();
                if self.parent_needs(id, 0) {
                    Self::add_grad(&mut self.grads, x, xs, |g| {
                        for nc in 0..xs.n * xs.c {
                            g[nc * xs.plane() + argmax[nc] as usize] += dy.data()[nc];
                        }
                    });
                }
            }
            Op::ChannelMean => {
                let x = parents[0];
                let xs = self.nodes[x.0].value.shape();
                let inv = T::one() / T::of(xs.c as f64);
                if self.parent_needs(id, 0) {
                    Self::add_grad(&mut self.grads, x, xs, |g| {
                        for s in 0..xs.n {
                            for c in 0..xs.c {
                                for p in 0..xs.plane() {
                                    g[(s * xs.c + c) * xs.plane() + p] +=
                                        dy.data()[s * xs.plane() + p] * inv;
                                }
                            }
                        }
                    });
                }
            }
            Op::ChannelSum => {
                let x = parents[0];
                let xs = self.nodes[x.0].value.shape();
                if self.parent_needs(id, 0) {
                    Self::add_grad(&mut self.grads, x, xs, |g| {
                        for s in 0..xs.n {
                            for c in 0..xs.c {
                                for p in 0..xs.plane() {
                                    g[(s * xs.c + c) * xs.plane() + p] += dy.data()[s * xs.plane() + p];
                                }
                            }
                        }
                    });
                }
            }
            Op::ChannelMax { argmax } => {
                let argmax = argmax.clone();
                let x = parents[0];
                let xs = self.nodes[x.0].value.shape();
                if self.parent_needs(id, 0) {
                    Self::add_grad(&mut self.grads, x, xs, |g| {
                        for s in 0..xs.n {
                            for p in 0..xs.plane() {
                                let c = argmax[s * xs.plane() + p] as usize;
                                g[(s * xs.c + c) * xs.plane() + p] += dy.data()[s * xs.plane() + p];
                            }
                        }
                    });
                }
            }
            Op::Upsample2x => {
                let x = parents[0];
                let xs = self.nodes[x.0].value.shape();
                let ys = self.nodes[id].value.shape();
                let ty = kernels::up2_table(xs.h, ys.h);
                let tx = kernels::up2_table(xs.w, ys.w);
                if self.parent_needs(id, 0) {
                    Self::add_grad(&mut self.grads, x, xs, |g| {
                        for nc in 0..xs.n * xs.c {
                            let dst = &mut g[nc * xs.plane()..(nc + 1) * xs.plane()];
                            let src = &dy.data()[nc * ys.plane()..(nc + 1) * ys.plane()];
                            for oy in 0..ys.h {
                                let (y0, y1, fy) = ty[oy];
                                let fy = T::of(fy);
                                for ox in 0..ys.w {
                                    let (x0, x1, fx) = tx[ox];
                                    let fx = T::of(fx);
                                    let v = src[oy * ys.w + ox];
                                    let one = T::one();
                                    dst[y0 * xs.w + x0] += v * (one - fy) * (one - fx);
                                    dst[y0 * xs.w + x1] += v * (one - fy) * fx;
                                    dst[y1 * xs.w + x0] += v * fy * (one - fx);
                                    dst[y1 * xs.w + x1] += v * fy * fx;
                                }
                            }
                        }
                    });
                }
            }
            Op::L2Norm { eps } => {
                let eps = *eps;
                let x = parents[0];
                let xs = self.nodes[x.0].value.shape();
                let xd = self.nodes[x.0].value.data();
                let yv = self.nodes[id].value.data();
                if self.parent_needs(id, 0) {
                    Self::add_grad(&mut self.grads, x, xs, |g| {
                        for s in 0..xs.n {
                            for p in 0..xs.plane() {
                                let mut sq = T::zero();
                                for c in 0..xs.c {
                                    let v = xd[(s * xs.c + c) * xs.plane() + p];
                                    sq += v * v;
                                }
                                let norm = sq.sqrt();
                                if norm > eps {
                                    let mut ydy = T::zero();
                                    for c in 0..xs.c {
                                        let i = (s * xs.c + c) * xs.plane() + p;
                                        ydy += yv[i] * dy.data()[i];
                                    }
                                    for c in 0..xs.c {
                                        let i = (s * xs.c + c) * xs.plane() + p;
                                        g[i] += (dy.data()[i] - yv[i] * ydy) / norm;
                                    }
                                } else {
                                    for c in 0..xs.c {
                                        let i = (s * xs.c + c) * xs.plane() + p;
                                        g[i] += dy.data()[i] / eps;
                                    }
                                }
                            }
                        }
                    });
                }
            }
            Op::Add => {
                for slot in 0..2 {
                    let p = parents[slot];
                    let ps = self.nodes[p.0].value.shape();
                    if self.parent_needs(id, slot) {
                        Self::add_grad(&mut self.grads, p, ps, |g| {
                            for (a, b) in g.iter_mut().zip(dy.data()) {
                                *a += *b;
                            }
                        });
                    }
                }
            }
            Op::Mul => {
                for slot in 0..2 {
                    let p = parents[slot];
                    let other = parents[1 - slot];
                    let ps = self.nodes[p.0].value.shape();
                    if self.parent_needs(id, slot) {
                        let od = self.nodes[other.0].value.data();
                        Self::add_grad(&mut self.grads, p, ps, |g| {
                            for i in 0..g.len() {
                                g[i] += dy.data()[i] * od[i];
                            }
                        });
                    }
                }
            }
            Op::MulGateC => {
                let (x, gate) = (parents[0], parents[1]);
                let xs = self.nodes[x.0].value.shape();
                let gs = self.nodes[gate.0].value.shape();
                let xd = self.nodes[x.0].value.data();
                let gd = self.nodes[gate.0].value.data();
                if self.parent_needs(id, 0) {
                    Self::add_grad(&mut self.grads, x, xs, |g| {
                        for nc in 0..xs.n * xs.c {
                            for p in 0..xs.plane() {
                                g[nc * xs.plane() + p] += dy.data()[nc * xs.plane() + p] * gd[nc];
                            }
                        }
                    });
                }
                if self.parent_needs(id, 1) {
                    Self::add_grad(&mut self.grads, gate, gs, |g| {
                        for nc in 0..xs.n * xs.c {
                            let mut acc = T::zero();
                            for p in 0..xs.plane() {
                                acc += dy.data()[nc * xs.plane() + p] * xd[nc * xs.plane() + p];
                            }
                            g[nc] += acc;
                        }
                    });
                }
            }
            Op::MulGateS => {
                let (x, gate) = (parents[0], parents[1]);
                let xs = self.nodes[x.0].value.shape();
                let gs = self.nodes[gate.0].value.shape();
                let xd = self.nodes[x.0].value.data();
                let gd = self.nodes[gate.0].value.data();
                if self.parent_needs(id, 0) {
                    Self::add_grad(&mut self.grads, x, xs, |g| {
                        for s in 0..xs.n {
                            for c in 0..xs.c {
                                let base = (s * xs.c + c) * xs.plane();
                                for p in 0..xs.plane() {
                                    g[base + p] += dy.data()[base + p] * gd[s * xs.plane() + p];
                                }
                            }
                        }
                    });
                }
                if self.parent_needs(id, 1) {
                    Self::add_grad(&mut self.grads, gate, gs, |g| {
                        for s in 0..xs.n {
                            for c in 0..xs.c {
                                let base = (s * xs.c + c) * xs.plane();
                                for p in 0..xs.plane() {
                                    g[s * xs.plane() + p] += dy.data()[base + p] * xd[base + p];
                                }
                            }
                        }
                    });
                }
            }
            Op::ConcatC => {
                let ys = self.nodes[id].value.shape();
                let plane = ys.plane();
                let mut c_off = 0usize;
                for (slot, &p) in parents.iter().enumerate() {
                    let ps = self.nodes[p.0].value.shape();
                    if self.parent_needs(id, slot) {
                        Self::add_grad(&mut self.grads, p, ps, |g| {
                            for s in 0..ys.n {
                                let src = &dy.data()
                                    [(s * ys.c + c_off) * plane..(s * ys.c + c_off + ps.c) * plane];
                                let dst = &mut g[s * ps.c * plane..(s + 1) * ps.c * plane];
                                for (a, b) in dst.iter_mut().zip(src) {
                                    *a += *b;
                                }
                            }
                        });
                    }
                    c_off += ps.c;
                }
            }
            Op::MaxMany { argmax } => {
                let argmax = argmax.clone();
                for (slot, &p) in parents.iter().enumerate() {
                    let ps = self.nodes[p.0].value.shape();
                    if self.parent_needs(id, slot) {
                        Self::add_grad(&mut self.grads, p, ps, |g| {
                            for i in 0..g.len() {
                                if argmax[i] as usize == slot {
                                    g[i] += dy.data()[i];
                                }
                            }
                        });
                    }
                }
            }
            Op::CropTo => {
                let x = parents[0];
                let xs = self.nodes[x.0].value.shape();
                let ys = self.nodes[id].value.shape();
                if self.parent_needs(id, 0) {
                    Self::add_grad(&mut self.grads, x, xs, |g| {
                        for nc in 0..xs.n * xs.c {
                            for y in 0..ys.h {
                                for x_ in 0..ys.w {
                                    g[nc * xs.plane() + y * xs.w + x_] +=
                                        dy.data()[nc * ys.plane() + y * ys.w + x_];
                                }
                            }
                        }
                    });
                }
            }
            Op::Affine { a } => {
                let a = *a;
                let x = parents[0];
                let xs = self.nodes[x.0].value.shape();
                if self.parent_needs(id, 0) {
                    Self::add_grad(&mut self.grads, x, xs, |g| {
                        for (gi, d) in g.iter_mut().zip(dy.data()) {
                            *gi += a * *d;
                        }
                    });
                }
            }
            Op::SumAll => {
                let x = parents[0];
                let xs = self.nodes[x.0].value.shape();
                let v = dy.data()[0];
                if self.parent_needs(id, 0) {
                    Self::add_grad(&mut self.grads, x, xs, |g| {
                        for gi in g.iter_mut() {
                            *gi += v;
                        }
                    });
                }
            }
        }
        Ok(())
    }
}
