//! Finite-difference verification of the analytic gradients, double
//! precision only. Central differences are only meaningful away from the
//! kinks of max/relu selections, so entries failing at the primary step are
//! retried at alternate steps before being reported.

use crate::graph::{Graph, NodeId};
use crate::params::ParamStore;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Pass threshold on the max relative error.
    pub tolerance: f64,
    /// Steps retried for entries contaminated by kink crossings or
    /// cancellation at the primary step.
    pub fallback_steps: Vec<f64>,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { step: 1e-4, tolerance: 1e-4, fallback_steps: vec![1e-3, 3e-4, 3e-5] }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckEntry {
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    pub worst_index: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_err: f64,
    pub tolerance: f64,
    /// Smallest margin to a non-differentiable point seen in the nominal
    /// forward pass (diagnostic).
    pub min_kink_margin: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Checks d(loss)/d(theta) for every trainable parameter scalar and every
/// input scalar against central differences. `build` must construct the loss
/// (a scalar node) from the graph, the store and the leafed inputs; it runs
/// many times, so it must be a pure function of the store and inputs.
pub fn check_gradients<F>(
    store: &mut ParamStore<f64>,
    inputs: &mut [Tensor<f64>],
    build: F,
    cfg: &GradCheckConfig,
) -> crate::error::EngineResult<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &mut ParamStore<f64>, &[NodeId]) -> crate::error::EngineResult<NodeId>,
{
    // Analytic pass.
    let mut g = Graph::new();
    g.track_kinks = true;
    let input_ids: Vec<NodeId> =
        inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
    let loss_id = build(&mut g, store, &input_ids)?;
    g.backward(loss_id)?;
    let kinks = g.kinks();
    let min_kink_margin =
        kinks.min_relu_margin.min(kinks.min_max_margin).min(kinks.min_norm);

    store.zero_grads();
    g.collect_param_grads(store);
    let analytic_inputs: Vec<Option<Tensor<f64>>> =
        input_ids.iter().map(|&id| g.grad(id).cloned()).collect();
    drop(g);

    let eval = |store: &mut ParamStore<f64>, inputs: &[Tensor<f64>]| -> crate::error::EngineResult<f64> {
        let mut g = Graph::new();
        let ids: Vec<NodeId> = inputs.iter().map(|t| g.leaf(t.clone(), true)).collect();
        let loss = build(&mut g, store, &ids)?;
        g.value(loss).scalar()
    };

    let mut entries = Vec::new();
    let mut max_rel = 0.0f64;

    // Parameters.
    for pid in store.trainable_ids() {
        let name = store.get(pid).name.clone();
        let analytic = match store.grad(pid) {
            Some(t) => t.data().to_vec(),
            None => vec![0.0; store.value(pid).shape().len()],
        };
        let mut worst = 0.0f64;
        let mut worst_index = 0usize;
        for i in 0..analytic.len() {
            let mut best = f64::INFINITY;
            for (attempt, &h) in
                std::iter::once(&cfg.step).chain(cfg.fallback_steps.iter()).enumerate()
            {
                let orig = store.value(pid).data()[i];
                store.value_mut(pid).data_mut()[i] = orig + h;
                let fp = eval(store, inputs)?;
                store.value_mut(pid).data_mut()[i] = orig - h;
                let fm = eval(store, inputs)?;
                store.value_mut(pid).data_mut()[i] = orig;
                let fd = (fp - fm) / (2.0 * h);
                best = best.min(rel_err(analytic[i], fd));
                if best < cfg.tolerance || attempt == cfg.fallback_steps.len() {
                    break;
                }
            }
            if best > worst {
                worst = best;
                worst_index = i;
            }
        }
        max_rel = max_rel.max(worst);
        entries.push(GradCheckEntry { name, checked: analytic.len(), max_rel_err: worst, worst_index });
    }

    // Inputs.
    for (slot, analytic) in analytic_inputs.iter().enumerate() {
        let analytic = match analytic {
            Some(t) => t.data().to_vec(),
            None => vec![0.0; inputs[slot].shape().len()],
        };
        let mut worst = 0.0f64;
        let mut worst_index = 0usize;
        for i in 0..analytic.len() {
            let mut best = f64::INFINITY;
            for (attempt, &h) in
                std::iter::once(&cfg.step).chain(cfg.fallback_steps.iter()).enumerate()
            {
                let orig = inputs[slot].data()[i];
                inputs[slot].data_mut()[i] = orig + h;
                let fp = eval(store, inputs)?;
                inputs[slot].data_mut()[i] = orig - h;
                let fm = eval(store, inputs)?;
                inputs[slot].data_mut()[i] = orig;
                let fd = (fp - fm) / (2.0 * h);
                best = best.min(rel_err(analytic[i], fd));
                if best < cfg.tolerance || attempt == cfg.fallback_steps.len() {
                    break;
                }
            }
            if best > worst {
                worst = best;
                worst_index = i;
            }
        }
        max_rel = max_rel.max(worst);
        entries.push(GradCheckEntry {
            name: format!("input[{slot}]"),
            checked: analytic.len(),
            max_rel_err: worst,
            worst_index,
        });
    }

    Ok(GradCheckReport { entries, max_rel_err: max_rel, tolerance: cfg.tolerance, min_kink_margin })
}
