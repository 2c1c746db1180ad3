use serde::{Deserialize, Serialize};

use crate::error::{TrainError, TrainResult};

/// Training recipe: stepped learning rate halved every five epochs from
/// 1e-3, batches of 32 patch samples, 32x32 crops with 32 lights each.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    #[serde(default = "d_lr0")]
    pub lr0: f64,
    #[serde(default = "d_halve_every")]
    pub halve_every: usize,
    #[serde(default = "d_epochs")]
    pub epochs: usize,
    #[serde(default = "d_batch_size")]
    pub batch_size: usize,
    #[serde(default = "d_patch")]
    pub patch: usize,
    #[serde(default = "d_lights_per_sample")]
    pub lights_per_sample: usize,
    /// Batches per epoch; defaults to one pass (ceil(scenes / batch_size)).
    #[serde(default)]
    pub batches_per_epoch: Option<usize>,
    /// Samples per backward pass; gradients accumulate so the step is
    /// mathematically one batch regardless (memory knob only).
    #[serde(default = "d_micro_batch")]
    pub micro_batch: usize,
    #[serde(default = "d_beta1")]
    pub adam_beta1: f64,
    #[serde(default = "d_beta2")]
    pub adam_beta2: f64,
    #[serde(default = "d_eps")]
    pub adam_eps: f64,
    #[serde(default)]
    pub seed: u64,
    /// When false, epoch logs report 0.0 seconds (determinism mode).
    #[serde(default = "d_true")]
    pub log_wall_clock: bool,
}

fn d_lr0() -> f64 {
    0.001
}
fn d_halve_every() -> usize {
    5
}
fn d_epochs() -> usize {
    30
}
fn d_batch_size() -> usize {
    32
}
fn d_patch() -> usize {
    32
}
fn d_lights_per_sample() -> usize {
    32
}
fn d_micro_batch() -> usize {
    8
}
fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.999
}
fn d_eps() -> f64 {
    1e-8
}
fn d_true() -> bool {
    true
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr0: d_lr0(),
            halve_every: d_halve_every(),
            epochs: d_epochs(),
            batch_size: d_batch_size(),
            patch: d_patch(),
            lights_per_sample: d_lights_per_sample(),
            batches_per_epoch: None,
            micro_batch: d_micro_batch(),
            adam_beta1: d_beta1(),
            adam_beta2: d_beta2(),
            adam_eps: d_eps(),
            seed: 0,
            log_wall_clock: d_true(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> TrainResult<()> {
        for (name, v) in [
            ("halve_every", self.halve_every),
            ("epochs", self.epochs),
            ("batch_size", self.batch_size),
            ("lights_per_sample", self.lights_per_sample),
            ("micro_batch", self.micro_batch),
        ] {
            if v == 0 {
                return Err(TrainError::Config(format!("{name} must be positive")));
            }
        }
        if self.patch < 4 {
            return Err(TrainError::Config(format!("patch must be >= 4, got {}", self.patch)));
        }
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(TrainError::Config("lr0 must be positive".into()));
        }
        if self.batches_per_epoch == Some(0) {
            return Err(TrainError::Config("batches_per_epoch must be positive".into()));
        }
        Ok(())
    }

    pub fn batches_for(&self, n_scenes: usize) -> usize {
        self.batches_per_epoch.unwrap_or_else(|| n_scenes.div_ceil(self.batch_size).max(1))
    }
}

/// lr0 * 0.5^floor(epoch / halve_every).
pub fn lr_at(epoch: usize, cfg: &TrainConfig) -> f64 {
    cfg.lr0 * 0.5f64.powi((epoch / cfg.halve_every) as i32)
}
