//! Per-image evaluation of a trained network.

use std::fmt::Write as _;

use crate::data::Sample;
use crate::error::Result;
use crate::grid::Mask;
use crate::metrics::{mean_std, size_stats, EvalRecord};
use crate::network::{forward, NetParams};
use crate::size_proposal::make_bounds;

pub fn evaluate(params: &NetParams, samples: &[Sample], epsilon: f64) -> Result<Vec<EvalRecord>> {
    samples
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let out = forward(&s.image, params).map_err(|e| e.for_image(i))?;
            let pred = Mask::threshold(out.shape(), out.values())?;
            let bounds = make_bounds(s.true_size, epsilon).map_err(|e| e.for_image(i))?;
            size_stats(&pred, &s.gt, bounds).map_err(|e| e.for_image(i))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSummary {
    pub dice_mean: f64,
    pub dice_std: f64,
    pub size_ratio_mean: f64,
    pub size_ratio_std: f64,
    pub within_bounds_rate: f64,
}

pub fn summarize(records: &[EvalRecord]) -> EvalSummary {
    let dice: Vec<f64> = records.iter().map(|r| r.dice).collect();
    let ratio: Vec<f64> = records.iter().map(|r| r.size_ratio).collect();
    let (dice_mean, dice_std) = mean_std(&dice);
    let (size_ratio_mean, size_ratio_std) = mean_std(&ratio);
    let within = records.iter().filter(|r| r.within_bounds).count();
    EvalSummary {
        dice_mean,
        dice_std,
        size_ratio_mean,
        size_ratio_std,
        within_bounds_rate: within as f64 / records.len().max(1) as f64,
    }
}

/// One row per image followed by a `mean` row.
pub fn to_csv(records: &[EvalRecord]) -> String {
    let mut out = String::from("image,dice,pred_size,true_size,size_ratio,within_bounds\n");
    for (i, r) in records.iter().enumerate() {
        let _ = writeln!(
            out,
            "{i},{},{},{},{},{}",
            r.dice,
            r.pred_size,
            r.true_size,
            r.size_ratio,
            u8::from(r.within_bounds)
        );
    }
    let s = summarize(records);
    let pred: f64 = records.iter().map(|r| r.pred_size as f64).sum::<f64>() / records.len().max(1) as f64;
    let truth: f64 = records.iter().map(|r| r.true_size as f64).sum::<f64>() / records.len().max(1) as f64;
    let _ = writeln!(
        out,
        "mean,{},{},{},{},{}",
        s.dice_mean, pred, truth, s.size_ratio_mean, s.within_bounds_rate
    );
    out
}
