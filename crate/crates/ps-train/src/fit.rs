use std::fs;
use std::path::{Path, PathBuf};

use nn_engine::{load_params, save_params, Graph, Mode, ParamStore, Scalar, Shape, Tensor};
use ps_core::{angular_error, Rng};
use rmaff_net::{network_forward, NetworkConfig, RmaffPsn};
use serde::{Deserialize, Serialize};

use crate::adam::Adam;
use crate::batch::{make_batch, Batch, Scene};
use crate::config::{lr_at, TrainConfig};
use crate::error::{TrainError, TrainResult};
use crate::loss::masked_cosine_loss_node;

const STREAM_BATCH: u64 = 0x42_41;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config_version: u32,
    pub epoch: usize,
    pub val_mae: f64,
    pub rng_state: (u64, u64),
    pub adam_step: u64,
    pub precision: String,
    pub image_channels: usize,
    pub network: NetworkConfig,
    pub train: TrainConfig,
}

#[derive(Clone, Debug)]
pub struct EpochLog {
    pub epoch: usize,
    pub lr: f64,
    pub train_loss: f64,
    pub val_mae: f64,
    pub seconds: f64,
}

impl EpochLog {
    pub fn tsv_line(&self) -> String {
        format!(
            "{}\t{}\t{:.6}\t{:.6}\t{:.3}",
            self.epoch, self.lr, self.train_loss, self.val_mae, self.seconds
        )
    }
}

#[derive(Clone, Debug)]
pub struct FitResult<T> {
    pub best_epoch: usize,
    pub best_val_mae: f64,
    pub logs: Vec<EpochLog>,
    /// Parameter snapshot of the best epoch (running stats included).
    pub best_params: ParamStore<T>,
    pub best_checkpoint: Option<PathBuf>,
}

/// Mean over scenes of the per-scene mean angular error (degrees).
pub fn mean_angular_error_deg<T: Scalar>(
    net: &RmaffPsn,
    store: &mut ParamStore<T>,
    scenes: &[Scene<T>],
) -> TrainResult<f64> {
    if scenes.is_empty() {
        return Err(TrainError::Dataset("no scenes to evaluate".into()));
    }
    let mut total = 0.0;
    for (stack, gt) in scenes {
        let pred = network_forward(net, store, stack)?;
        let mut acc = 0.0;
        let mut count = 0usize;
        for (i, n_gt) in gt.iter_masked() {
            let row = i / gt.width();
            let col = i % gt.width();
            if pred.masked_in(row, col) {
                acc += angular_error(pred.get(row, col), n_gt)?.as_f64();
                count += 1;
            }
        }
        if count == 0 {
            return Err(TrainError::Dataset("scene with empty mask in evaluation".into()));
        }
        total += acc / count as f64;
    }
    Ok(total / scenes.len() as f64)
}

fn pack_gt_and_mask<T: Scalar>(batch: &[Scene<T>]) -> (Tensor<T>, Tensor<T>, usize) {
    let (h, w) = (batch[0].1.height(), batch[0].1.width());
    let n = batch.len();
    let mut gt = Tensor::zeros(Shape::new(n, 3, h, w));
    let mut mask = Tensor::zeros(Shape::new(n, 1, h, w));
    let mut count = 0usize;
    for (s, (_, gtmap)) in batch.iter().enumerate() {
        for y in 0..h {
            for x in 0..w {
                if gtmap.masked_in(y, x) {
                    let nrm = gtmap.get(y, x);
                    gt.set(s, 0, y, x, nrm.x);
                    gt.set(s, 1, y, x, nrm.y);
                    gt.set(s, 2, y, x, nrm.z);
                    mask.set(s, 0, y, x, T::one());
                    count += 1;
                }
            }
        }
    }
    (gt, mask, count)
}

fn assemble_slot<T: Scalar>(batch: &[Scene<T>], slot: usize) -> TrainResult<Tensor<T>> {
    let pairs: Vec<(&ps_core::Image<T>, ps_core::Vec3<T>)> = batch
        .iter()
        .map(|(stack, _)| (stack.image(slot), stack.lights().direction(slot)))
        .collect();
    Ok(rmaff_net::assemble_inputs(&pairs)?)
}

/// Forward + backward over one batch, accumulating parameter gradients in
/// the store (micro-batched; the result is the exact full-batch gradient).
/// Returns the batch loss. The caller applies the optimizer step.
pub fn train_step<T: Scalar>(
    net: &RmaffPsn,
    store: &mut ParamStore<T>,
    batch: &Batch<T>,
    cfg: &TrainConfig,
) -> TrainResult<f64> {
    if batch.is_empty() {
        return Err(TrainError::Dataset("empty batch".into()));
    }
    let m = batch[0].0.len();
    if batch.iter().any(|(s, _)| s.len() != m) {
        return Err(TrainError::Dataset(
            "samples in one batch must share the light count".into(),
        ));
    }
    let total_count: usize = batch.iter().map(|(_, gt)| gt.masked_in_count()).sum();
    if total_count == 0 {
        return Err(TrainError::Dataset("batch has no masked-in pixels".into()));
    }
    store.zero_grads();
    let mut loss_total = 0.0f64;
    for micro in batch.chunks(cfg.micro_batch) {
        let mut g = Graph::new();
        let mut inputs = Vec::with_capacity(m);
        for j in 0..m {
            let x = assemble_slot(micro, j)?;
            inputs.push(g.leaf(x, false));
        }
        let pred = net.forward_batch(&mut g, store, &inputs, Mode::Train)?;
        let (gt, mask, _) = pack_gt_and_mask(micro);
        let loss = masked_cosine_loss_node(&mut g, pred, gt, mask, total_count)?;
        loss_total += g.value(loss).scalar()?.as_f64();
        g.backward(loss)?;
        g.collect_param_grads(store);
    }
    Ok(loss_total)
}

/// Loss of a batch without touching gradients or batch statistics.
pub fn batch_loss<T: Scalar>(
    net: &RmaffPsn,
    store: &mut ParamStore<T>,
    batch: &Batch<T>,
) -> TrainResult<f64> {
    let total_count: usize = batch.iter().map(|(_, gt)| gt.masked_in_count()).sum();
    if total_count == 0 {
        return Err(TrainError::Dataset("batch has no masked-in pixels".into()));
    }
    let m = batch[0].0.len();
    let mut total = 0.0;
    for micro in batch.chunks(8) {
        let mut g = Graph::new();
        let mut inputs = Vec::with_capacity(m);
        for j in 0..m {
            let x = assemble_slot(micro, j)?;
            inputs.push(g.leaf(x, false));
        }
        let pred = net.forward_batch(&mut g, store, &inputs, Mode::Eval)?;
        let (gt, mask, _) = pack_gt_and_mask(micro);
        let loss = masked_cosine_loss_node(&mut g, pred, gt, mask, total_count)?;
        total += g.value(loss).scalar()?.as_f64();
    }
    Ok(total)
}

pub fn save_checkpoint<T: Scalar>(
    dir: &Path,
    store: &ParamStore<T>,
    adam: &Adam<T>,
    meta: &CheckpointMeta,
) -> TrainResult<()> {
    fs::create_dir_all(dir)?;
    nn_engine::save_store(&dir.join("params.bin"), &dir.join("params.manifest"), store)?;
    let entries = adam.state_entries(store);
    save_params(&dir.join("optim.bin"), &dir.join("optim.manifest"), &entries)?;
    let json = serde_json::to_string_pretty(meta)
        .map_err(|e| TrainError::Checkpoint(format!("meta serialization: {e}")))?;
    fs::write(dir.join("meta.json"), json)?;
    Ok(())
}

pub fn load_checkpoint_meta(dir: &Path) -> TrainResult<CheckpointMeta> {
    let text = fs::read_to_string(dir.join("meta.json"))?;
    serde_json::from_str(&text)
        .map_err(|e| TrainError::Checkpoint(format!("meta parse ({}): {e}", dir.display())))
}

pub fn load_checkpoint_params<T: Scalar>(
    dir: &Path,
    store: &mut ParamStore<T>,
) -> TrainResult<()> {
    nn_engine::load_into_store(&dir.join("params.bin"), &dir.join("params.manifest"), store)?;
    Ok(())
}

pub fn load_checkpoint_optimizer<T: Scalar>(
    dir: &Path,
    store: &ParamStore<T>,
    adam: &mut Adam<T>,
    adam_step: u64,
) -> TrainResult<()> {
    let entries = load_params(&dir.join("optim.bin"), &dir.join("optim.manifest"))?;
    adam.load_state(store, entries, adam_step)
}

#[derive(Default)]
pub struct FitOptions {
    /// Where to write per-epoch checkpoints, the best-model note and the
    /// tab-separated training log.
    pub out_dir: Option<PathBuf>,
    /// Continue from a checkpoint directory written by a previous run.
    pub resume_from: Option<PathBuf>,
}

/// Full training loop: per epoch, `batches_for` batches of forward /
/// cosine-loss / backward / Adam at lr_at(epoch), then validation MAE; the
/// checkpoint with minimum validation MAE wins.
pub fn fit<T: Scalar>(
    net: &RmaffPsn,
    store: &mut ParamStore<T>,
    train: &[Scene<T>],
    val: &[Scene<T>],
    cfg: &TrainConfig,
    opts: &FitOptions,
) -> TrainResult<FitResult<T>> {
    cfg.validate()?;
    if train.is_empty() || val.is_empty() {
        return Err(TrainError::Dataset("train and validation sets must be nonempty".into()));
    }
    let image_channels = net.in_channels - 3;
    let mut adam = Adam::new(store, cfg);
    let mut batch_rng = Rng::from_seed(cfg.seed).split(STREAM_BATCH);
    let mut start_epoch = 0usize;
    if let Some(resume) = &opts.resume_from {
        let meta = load_checkpoint_meta(resume)?;
        if meta.precision != T::DTYPE {
            return Err(TrainError::Checkpoint(format!(
                "checkpoint precision {} vs requested {}",
                meta.precision,
                T::DTYPE
            )));
        }
        load_checkpoint_params(resume, store)?;
        load_checkpoint_optimizer(resume, store, &mut adam, meta.adam_step)?;
        batch_rng = Rng::from_state(meta.rng_state);
        start_epoch = meta.epoch + 1;
    }

    let batches = cfg.batches_for(train.len());
    let mut logs = Vec::new();
    let mut best_epoch = usize::MAX;
    let mut best_val = f64::INFINITY;
    let mut best_params = store.clone();
    let mut best_path = None;

    if let Some(dir) = &opts.out_dir {
        fs::create_dir_all(dir)?;
        if start_epoch == 0 {
            fs::write(dir.join("train_log.tsv"), "epoch\tlr\ttrain_loss\tval_mae\tseconds\n")?;
        }
    }

    for epoch in start_epoch..cfg.epochs {
        let started = std::time::Instant::now();
        let lr = lr_at(epoch, cfg);
        let mut loss_sum = 0.0;
        for b in 0..batches {
            let batch = make_batch(train, &mut batch_rng, cfg)?;
            let loss = train_step(net, store, &batch, cfg)?;
            if !loss.is_finite() {
                return Err(TrainError::NanLoss { epoch, batch: b });
            }
            adam.step(store, T::of(lr));
            loss_sum += loss;
        }
        let val_mae = mean_angular_error_deg(net, store, val)?;
        let seconds = if cfg.log_wall_clock { started.elapsed().as_secs_f64() } else { 0.0 };
        let log = EpochLog { epoch, lr, train_loss: loss_sum / batches as f64, val_mae, seconds };
        log::info!("{}", log.tsv_line());
        if let Some(dir) = &opts.out_dir {
            use std::io::Write;
            let mut f = fs::OpenOptions::new().append(true).open(dir.join("train_log.tsv"))?;
            writeln!(f, "{}", log.tsv_line())?;
            let ckpt_dir = dir.join(format!("epoch_{epoch:03}"));
            let meta = CheckpointMeta {
                config_version: 1,
                epoch,
                val_mae,
                rng_state: batch_rng.state(),
                adam_step: adam.step_count(),
                precision: T::DTYPE.to_string(),
                image_channels,
                network: net.cfg.clone(),
                train: cfg.clone(),
            };
            save_checkpoint(&ckpt_dir, store, &adam, &meta)?;
            if val_mae < best_val {
                best_path = Some(ckpt_dir.clone());
            }
        }
        if val_mae < best_val {
            best_val = val_mae;
            best_epoch = epoch;
            best_params = store.clone();
        }
        logs.push(log);
    }

    if let (Some(dir), Some(path)) = (&opts.out_dir, &best_path) {
        fs::write(
            dir.join("best.txt"),
            format!("epoch\t{best_epoch}\nval_mae\t{best_val}\npath\t{}\n", path.display()),
        )?;
    }

    Ok(FitResult { best_epoch, best_val_mae: best_val, logs, best_params, best_checkpoint: best_path })
}
