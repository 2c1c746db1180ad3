use nn_engine::{ParamId, ParamStore, Scalar, Tensor};

use crate::config::TrainConfig;
use crate::error::{TrainError, TrainResult};

/// Adam with bias correction over the store's trainable parameters.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    ids: Vec<ParamId>,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
    t: u64,
    beta1: T,
    beta2: T,
    eps: T,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>, cfg: &TrainConfig) -> Self {
        let ids = store.trainable_ids();
        let m = ids.iter().map(|&id| Tensor::zeros(store.value(id).shape())).collect();
        let v = ids.iter().map(|&id| Tensor::zeros(store.value(id).shape())).collect();
        Adam {
            ids,
            m,
            v,
            t: 0,
            beta1: T::of(cfg.adam_beta1),
            beta2: T::of(cfg.adam_beta2),
            eps: T::of(cfg.adam_eps),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update from the gradients currently held in the store.
    pub fn step(&mut self, store: &mut ParamStore<T>, lr: T) {
        self.t += 1;
        let bc1 = T::one() - self.beta1.powi(self.t as i32);
        let bc2 = T::one() - self.beta2.powi(self.t as i32);
        for (slot, &id) in self.ids.iter().enumerate() {
            let grad = store.grad(id).cloned();
            let m = self.m[slot].data_mut();
            let v = self.v[slot].data_mut();
            match grad {
                Some(gt) => {
                    let g = gt.data();
                    for i in 0..m.len() {
                        m[i] = self.beta1 * m[i] + (T::one() - self.beta1) * g[i];
                        v[i] = self.beta2 * v[i] + (T::one() - self.beta2) * g[i] * g[i];
                    }
                }
                None => {
                    for i in 0..m.len() {
                        m[i] = self.beta1 * m[i];
                        v[i] = self.beta2 * v[i];
                    }
                }
            }
            let theta = store.value_mut(id).data_mut();
            for i in 0..theta.len() {
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                theta[i] = theta[i] - lr * mhat / (vhat.sqrt() + self.eps);
            }
        }
    }

    /// Moment tensors named for checkpointing, in a stable order.
    pub fn state_entries(&self, store: &ParamStore<T>) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::with_capacity(2 * self.ids.len());
        for (slot, &id) in self.ids.iter().enumerate() {
            let name = &store.get(id).name;
            out.push((format!("adam.m.{name}"), &self.m[slot]));
            out.push((format!("adam.v.{name}"), &self.v[slot]));
        }
        out
    }

    pub fn load_state(
        &mut self,
        store: &ParamStore<T>,
        entries: Vec<(String, Tensor<T>)>,
        t: u64,
    ) -> TrainResult<()> {
        for (name, tensor) in entries {
            let (kind, param_name) = name
                .strip_prefix("adam.")
                .and_then(|rest| rest.split_once('.'))
                .ok_or_else(|| TrainError::Checkpoint(format!("bad optimizer entry {name}")))?;
            let slot = self
                .ids
                .iter()
                .position(|&id| store.get(id).name == param_name)
                .ok_or_else(|| {
                    TrainError::Checkpoint(format!("optimizer entry {name} has no parameter"))
                })?;
            let target = match kind {
                "m" => &mut self.m[slot],
                "v" => &mut self.v[slot],
                other => {
                    return Err(TrainError::Checkpoint(format!("unknown moment kind {other}")))
                }
            };
            if target.shape() != tensor.shape() {
                return Err(TrainError::Checkpoint(format!("optimizer entry {name} shape mismatch")));
            }
            *target = tensor;
        }
        self.t = t;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nn_engine::Shape;
    use ps_core::Rng;

    #[test]
    fn zero_lr_step_changes_no_parameter_bitwise() {
        let mut rng = Rng::from_seed(1);
        let mut store = ParamStore::<f64>::new();
        let id = store.add(
            "w",
            Tensor::from_fn(Shape::new(1, 1, 4, 4), |_| rng.gaussian_f64()),
            true,
        );
        let before = store.value(id).clone();
        store.accumulate_grad(id, &Tensor::filled(Shape::new(1, 1, 4, 4), 0.7));
        let mut adam = Adam::new(&store, &TrainConfig::default());
        adam.step(&mut store, 0.0);
        assert_eq!(*store.value(id), before);
    }

    #[test]
    fn descends_a_quadratic() {
        // minimize 0.5*(w - 3)^2 by feeding grad = w - 3.
        let mut store = ParamStore::<f64>::new();
        let id = store.add("w", Tensor::filled(Shape::new(1, 1, 1, 1), 10.0), true);
        let mut adam = Adam::new(&store, &TrainConfig::default());
        for _ in 0..2000 {
            let w = store.value(id).data()[0];
            store.zero_grads();
            store.accumulate_grad(id, &Tensor::filled(Shape::new(1, 1, 1, 1), w - 3.0));
            adam.step(&mut store, 0.05);
        }
        let w = store.value(id).data()[0];
        assert!((w - 3.0).abs() < 1e-3, "converged to {w}");
    }
}
