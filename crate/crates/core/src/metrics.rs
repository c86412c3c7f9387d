//! Overlap and size statistics on τ-thresholded predictions.

use crate::error::{Error, Result};
use crate::grid::Mask;
use crate::size_proposal::SizeBounds;

/// Dice similarity `2|S ∩ G| / (|S| + |G|)`; two empty masks score 1.
pub fn dice(pred: &Mask, gt: &Mask) -> Result<f64> {
    if pred.shape() != gt.shape() {
        return Err(Error::dim("dice", gt.shape().len(), pred.shape().len()));
    }
    let (mut inter, mut ps, mut gs) = (0usize, 0usize, 0usize);
    for (&a, &b) in pred.bits().iter().zip(gt.bits()) {
        inter += usize::from(a && b);
        ps += usize::from(a);
        gs += usize::from(b);
    }
    if ps + gs == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (ps + gs) as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRecord {
    pub dice: f64,
    pub pred_size: usize,
    pub true_size: usize,
    pub size_ratio: f64,
    pub within_bounds: bool,
}

pub fn size_stats(pred: &Mask, gt: &Mask, bounds: SizeBounds) -> Result<EvalRecord> {
    let true_size = gt.count();
    if true_size == 0 {
        return Err(Error::UndefinedRatio);
    }
    let pred_size = pred.count();
    Ok(EvalRecord {
        dice: dice(pred, gt)?,
        pred_size,
        true_size,
        size_ratio: pred_size as f64 / true_size as f64,
        within_bounds: bounds.contains(pred_size),
    })
}

/// Sample mean and (population) standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}
