//! Saliency metrics: MAE, the 256-threshold F-measure curve and the
//! structure measure, plus dataset-level evaluation reports.

mod report;
mod structure;

pub use report::{
    attribute_breakdown, evaluate, evaluate_maps, AttributeSummary, EvalOptions, EvalReport, FMaxMode, FrameScore,
    SequenceSummary, Summary,
};
pub use structure::{s_measure, S_ALPHA};

use crate::error::{Error, Result};
use crate::image_ops::{Mask, SaliencyMap};

/// `beta^2` of the F-measure.
pub const BETA2: f64 = 0.3;
/// Number of thresholds of the F-measure curve (one per 8-bit level).
pub const F_THRESHOLDS: usize = 256;

pub(crate) fn check_shapes(pred: &SaliencyMap, gt: &Mask) -> Result<()> {
    if pred.resolution() != gt.resolution() {
        let (a, b) = (pred.resolution(), gt.resolution());
        return Err(Error::Shape(format!(
            "prediction is {}x{} but ground truth is {}x{}",
            a.0, a.1, b.0, b.1
        )));
    }
    Ok(())
}

/// Mean absolute difference between prediction and mask.
pub fn mae(pred: &SaliencyMap, gt: &Mask) -> Result<f64> {
    check_shapes(pred, gt)?;
    let sum: f64 = pred
        .data
        .iter()
        .zip(&gt.data)
        .map(|(&p, &g)| (p as f64 - g as f64).abs())
        .sum();
    Ok(sum / pred.data.len() as f64)
}

/// 8-bit level of a prediction value.
pub fn quantize(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) as f64 * 255.0).round() as u8
}

/// F-measure for each threshold `t` in `0..=255`, binarizing the 8-bit
/// prediction as `level >= t`. Degenerate precision/recall pairs score 0.
pub fn f_measure_curve(pred: &SaliencyMap, gt: &Mask) -> Result<Vec<f64>> {
    check_shapes(pred, gt)?;
    let positives = gt.count();
    if positives == 0 {
        return Err(Error::EmptyGroundTruth);
    }
    // Histograms of levels over foreground and background pixels; cumulative
    // sums from the top give true/false positives at every threshold.
    let mut fg = [0usize; F_THRESHOLDS];
    let mut bg = [0usize; F_THRESHOLDS];
    for (&p, &g) in pred.data.iter().zip(&gt.data) {
        let q = quantize(p) as usize;
        if g != 0 {
            fg[q] += 1;
        } else {
            bg[q] += 1;
        }
    }
    let mut curve = vec![0.0; F_THRESHOLDS];
    let (mut tp, mut fp) = (0usize, 0usize);
    for t in (0..F_THRESHOLDS).rev() {
        tp += fg[t];
        fp += bg[t];
        curve[t] = f_from_counts(tp, fp, positives);
    }
    Ok(curve)
}

fn f_from_counts(tp: usize, fp: usize, positives: usize) -> f64 {
    if tp == 0 {
        return 0.0;
    }
    let precision = tp as f64 / (tp + fp) as f64;
    let recall = tp as f64 / positives as f64;
    let denom = BETA2 * precision + recall;
    if denom == 0.0 {
        0.0
    } else {
        (1.0 + BETA2) * precision * recall / denom
    }
}
