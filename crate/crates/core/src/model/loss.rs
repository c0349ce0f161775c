//! Hybrid BCE + soft-IoU supervision over the five decoder outputs and the coarse map.

use candle_core::{Tensor, D};
use serde::{Deserialize, Serialize};

use super::network::ForwardOutput;
use crate::encoder::NUM_LEVELS;
use crate::error::{Error, Result};
use crate::nn::{check_same_shape, sigmoid};

/// Smoothing constant of the soft IoU.
pub const IOU_EPS: f64 = 1.0;

/// Weight of the level-`i` term (1-based): `1 / 2^(i-1)`.
pub fn level_weight(level: usize) -> f64 {
    1.0 / (1u64 << (level - 1)) as f64
}

/// Values of every loss term of one step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// `l(S_i, G)` for levels 1..5.
    pub per_level: [f64; NUM_LEVELS],
    /// `l(CM, G)`.
    pub coarse: f64,
    /// BCE part of each term; levels 1..5 then the coarse map.
    pub bce_part: [f64; NUM_LEVELS + 1],
    /// IoU part of each term, same order.
    pub iou_part: [f64; NUM_LEVELS + 1],
    pub total: f64,
}

impl LossBreakdown {
    /// Builds the breakdown from its BCE and IoU parts and derives the weighted total.
    pub fn from_parts(bce_part: [f64; NUM_LEVELS + 1], iou_part: [f64; NUM_LEVELS + 1]) -> Self {
        let terms: [f64; NUM_LEVELS + 1] = std::array::from_fn(|i| bce_part[i] + iou_part[i]);
        let mut per_level = [0.0; NUM_LEVELS];
        per_level.copy_from_slice(&terms[..NUM_LEVELS]);
        let coarse = terms[NUM_LEVELS];
        Self {
            per_level,
            coarse,
            bce_part,
            iou_part,
            total: weighted_total(&per_level, coarse),
        }
    }
}

/// `sum_i l_i / 2^(i-1) + coarse`.
pub fn weighted_total(per_level: &[f64; NUM_LEVELS], coarse: f64) -> f64 {
    per_level
        .iter()
        .enumerate()
        .map(|(i, l)| level_weight(i + 1) * l)
        .sum::<f64>()
        + coarse
}

/// Rejects targets with values outside `[0, 1]`.
pub fn check_target(gt: &Tensor) -> Result<()> {
    let flat = gt.flatten_all()?;
    let lo = flat.min(0)?.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
    let hi = flat.max(0)?.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?;
    if !(lo >= 0.0 && hi <= 1.0) {
        return Err(Error::Value(format!("ground truth must lie in [0, 1], found [{lo}, {hi}]")));
    }
    Ok(())
}

/// Mean binary cross-entropy of `sigmoid(logits)` against `gt`, in the
/// overflow-free form `max(x, 0) - x g + ln(1 + e^-|x|)`.
pub fn bce_with_logits(logits: &Tensor, gt: &Tensor) -> Result<Tensor> {
    check_same_shape(logits, gt, "bce inputs")?;
    let pos = logits.relu()?;
    let soft = (logits.abs()?.neg()?.exp()? + 1.0)?.log()?;
    let per_pixel = ((pos - (logits * gt)?)? + soft)?;
    Ok(per_pixel.mean_all()?)
}

/// `1 - (sum p g + eps) / (sum p + sum g - sum p g + eps)` per sample, averaged over the batch.
pub fn soft_iou_loss(probs: &Tensor, gt: &Tensor) -> Result<Tensor> {
    check_same_shape(probs, gt, "iou inputs")?;
    let n = probs.dim(0)?;
    let p = probs.reshape((n, ()))?;
    let g = gt.reshape((n, ()))?;
    let inter = (&p * &g)?.sum(D::Minus1)?;
    let union = ((p.sum(D::Minus1)? + g.sum(D::Minus1)?)? - &inter)?;
    let ratio = ((inter + IOU_EPS)? / (union + IOU_EPS)?)?;
    Ok(ratio.neg()?.affine(1.0, 1.0)?.mean_all()?)
}

/// `l_bce + l_iou` for one logit map; returns the two parts separately.
pub fn hybrid_term(logits: &Tensor, gt: &Tensor) -> Result<(Tensor, Tensor)> {
    let bce = bce_with_logits(logits, gt)?;
    let iou = soft_iou_loss(&sigmoid(logits)?, gt)?;
    Ok((bce, iou))
}

/// Differentiable total loss plus its per-term breakdown.
///
/// `gt` is `(N, 1, H, W)` at the network input size.
pub fn total_loss(output: &ForwardOutput, gt: &Tensor) -> Result<(Tensor, LossBreakdown)> {
    check_target(gt)?;
    let gt = gt.to_dtype(output.coarse_logit.dtype())?;
    let mut bce_part = [0.0; NUM_LEVELS + 1];
    let mut iou_part = [0.0; NUM_LEVELS + 1];
    let mut total: Option<Tensor> = None;
    let maps = output.logits.iter().chain(std::iter::once(&output.coarse_logit));
    for (i, logits) in maps.enumerate() {
        let (bce, iou) = hybrid_term(logits, &gt)?;
        bce_part[i] = scalar(&bce)?;
        iou_part[i] = scalar(&iou)?;
        let weight = if i < NUM_LEVELS { level_weight(i + 1) } else { 1.0 };
        let term = ((bce + iou)? * weight)?;
        total = Some(match total {
            None => term,
            Some(t) => (t + term)?,
        });
    }
    let total = total.expect("six terms");
    Ok((total, LossBreakdown::from_parts(bce_part, iou_part)))
}

fn scalar(t: &Tensor) -> Result<f64> {
    Ok(t.to_dtype(candle_core::DType::F64)?.to_scalar::<f64>()?)
}
