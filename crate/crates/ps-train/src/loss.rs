use nn_engine::{Graph, NodeId, Scalar, Shape, Tensor};
use ps_core::{NormalMap, Real};

use crate::error::{TrainError, TrainResult};

/// Mean over masked-in pixels of (1 - n . n'), in [0, 2]. Both maps must be
/// unit-normalized on masked-in pixels; masked-out pixels are excluded from
/// sum and count.
pub fn cosine_loss<T: Real>(pred: &NormalMap<T>, gt: &NormalMap<T>) -> TrainResult<T> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(TrainError::Dataset(format!(
            "loss shape mismatch: {}x{} vs {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut acc = T::zero();
    let mut count = 0usize;
    for (i, n_gt) in gt.iter_masked() {
        let row = i / gt.width();
        let col = i % gt.width();
        if !pred.masked_in(row, col) {
            continue;
        }
        acc += T::one() - pred.get(row, col).dot(n_gt);
        count += 1;
    }
    if count == 0 {
        return Err(TrainError::Dataset("cosine loss over zero masked-in pixels".into()));
    }
    Ok(acc / T::of(count as f64))
}

/// Graph version of the masked cosine loss. `pred` is (n,3,h,w) unit
/// normals; gt carries the sentinel (0,0,0) and `mask` is a 0/1 (n,1,h,w)
/// tensor. The sum is scaled by 1/`total_count`, letting micro-batch losses
/// add up to exactly the full-batch loss.
pub fn masked_cosine_loss_node<T: Scalar>(
    g: &mut Graph<T>,
    pred: NodeId,
    gt: Tensor<T>,
    mask: Tensor<T>,
    total_count: usize,
) -> TrainResult<NodeId> {
    let ps = g.shape(pred);
    if gt.shape() != ps {
        return Err(TrainError::Dataset(format!(
            "ground truth shape {} vs prediction {ps}",
            gt.shape()
        )));
    }
    if mask.shape() != Shape::new(ps.n, 1, ps.h, ps.w) {
        return Err(TrainError::Dataset(format!("mask shape {} invalid", mask.shape())));
    }
    if total_count == 0 {
        return Err(TrainError::Dataset("cosine loss over zero masked-in pixels".into()));
    }
    let gt_id = g.leaf(gt, false);
    let mask_id = g.leaf(mask, false);
    let prod = g.mul(pred, gt_id)?;
    let dot = g.channel_sum(prod);
    let one_minus = g.affine(dot, -T::one(), T::one());
    let masked = g.mul(one_minus, mask_id)?;
    let sum = g.sum_all(masked);
    Ok(g.scale(sum, T::one() / T::of(total_count as f64)))
}
