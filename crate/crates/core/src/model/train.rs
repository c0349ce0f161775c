//! Momentum-SGD training loop with paired flip/crop augmentation.

use std::io::Write;

use candle_core::{Tensor, Var};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::{total_loss, LossBreakdown};
use super::network::{ModelInputs, Network};
use crate::data::FrameRecord;
use crate::error::{Error, Result};
use crate::image_ops::{Plane, RgbImage};
use crate::nn::{ParamGroup, ParamKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    /// Number of optimizer steps.
    pub steps: usize,
    pub batch_size: usize,
    /// Learning rate of the encoder trunks.
    pub lr_backbone: f64,
    /// Learning rate of every other parameter.
    pub lr_head: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Random horizontal flip with probability 0.5.
    pub flip: bool,
    /// Random crop before resizing, with side ratio drawn from `[crop_min, 1]`.
    pub crop: bool,
    pub crop_min: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl TrainConfig {
    /// Optimizer settings of the full-scale recipe (batch 8).
    pub fn paper() -> Self {
        Self {
            steps: 1000,
            batch_size: 8,
            lr_backbone: 1e-4,
            lr_head: 1e-3,
            momentum: 0.9,
            weight_decay: 5e-4,
            flip: true,
            crop: true,
            crop_min: 0.75,
            seed: 0,
        }
    }

    /// Desk-scale budget for the toy preset. A randomly initialized toy model
    /// needs far larger steps than a pretrained backbone to move in a few
    /// hundred iterations.
    pub fn toy() -> Self {
        Self {
            steps: 300,
            batch_size: 2,
            lr_backbone: 0.05,
            lr_head: 0.05,
            ..Self::paper()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.lr_backbone > 0.0 && self.lr_head > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.momentum) || self.weight_decay < 0.0 {
            return Err(Error::Config("momentum must lie in [0, 1) and weight_decay be >= 0".into()));
        }
        if !(self.crop_min > 0.0 && self.crop_min <= 1.0) {
            return Err(Error::Config(format!("crop_min must lie in (0, 1], got {}", self.crop_min)));
        }
        Ok(())
    }

    pub fn lr(&self, group: ParamGroup) -> f64 {
        match group {
            ParamGroup::Backbone => self.lr_backbone,
            ParamGroup::Head => self.lr_head,
        }
    }
}

/// Momentum SGD with L2 weight decay folded into the gradient:
/// `v = m v + (g + wd p); p -= lr v`.
#[derive(Debug, Default)]
pub struct Sgd {
    velocity: Vec<Option<Tensor>>,
}

impl Sgd {
    pub fn step(&mut self, net: &Network, grads: &candle_core::backprop::GradStore, cfg: &TrainConfig) -> Result<()> {
        let params: Vec<_> = net.store.iter().collect();
        if self.velocity.len() != params.len() {
            self.velocity = vec![None; params.len()];
        }
        for (p, v) in params.iter().zip(self.velocity.iter_mut()) {
            if p.kind != ParamKind::Weight {
                continue;
            }
            let Some(g) = grads.get(p.var.as_tensor()) else {
                continue;
            };
            // Gradients keep references to the forward graph; detach so the
            // momentum buffer does not retain every past step.
            let w = p.var.as_tensor().detach();
            let g = (g.detach() + (&w * cfg.weight_decay)?)?;
            let nv = match v.take() {
                Some(prev) => ((prev * cfg.momentum)? + g)?,
                None => g,
            };
            update(&p.var, &(&w - (&nv * cfg.lr(p.group))?)?)?;
            *v = Some(nv);
        }
        Ok(())
    }
}

fn update(var: &Var, value: &Tensor) -> Result<()> {
    var.set(&value.detach())?;
    Ok(())
}

/// Progress counters carried across calls to [`train`].
#[derive(Debug, Default)]
pub struct TrainState {
    pub step: usize,
    pub epoch: usize,
    pub optimizer: Sgd,
}

/// One log line.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub epoch: usize,
    #[serde(flatten)]
    pub loss: LossBreakdown,
}

/// A batch ready for the network: inputs plus `(N, 1, H, W)` targets.
#[derive(Debug, Clone)]
pub struct Batch {
    pub inputs: ModelInputs,
    pub gt: Tensor,
}

/// Random flip and crop applied identically to every modality of a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Augmentation {
    pub flip: bool,
    /// `(top, left, height, width)`.
    pub crop: Option<(usize, usize, usize, usize)>,
}

impl Augmentation {
    pub const IDENTITY: Augmentation = Augmentation { flip: false, crop: None };

    pub fn sample(cfg: &TrainConfig, resolution: (usize, usize), rng: &mut ChaCha8Rng) -> Self {
        let flip = cfg.flip && rng.random_bool(0.5);
        let crop = if cfg.crop {
            let (h, w) = resolution;
            let ratio = if cfg.crop_min < 1.0 {
                rng.random_range(cfg.crop_min..=1.0)
            } else {
                1.0
            };
            let ch = ((h as f64 * ratio).round() as usize).clamp(1, h);
            let cw = ((w as f64 * ratio).round() as usize).clamp(1, w);
            let top = rng.random_range(0..=h - ch);
            let left = rng.random_range(0..=w - cw);
            Some((top, left, ch, cw))
        } else {
            None
        };
        Self { flip, crop }
    }

    pub fn apply_rgb(&self, img: &RgbImage) -> RgbImage {
        let img = match self.crop {
            Some((t, l, h, w)) => img.crop(t, l, h, w),
            None => img.clone(),
        };
        if self.flip {
            img.flip_horizontal()
        } else {
            img
        }
    }

    pub fn apply_plane(&self, p: &Plane) -> Plane {
        let p = match self.crop {
            Some((t, l, h, w)) => p.crop(t, l, h, w),
            None => p.clone(),
        };
        if self.flip {
            p.flip_horizontal()
        } else {
            p
        }
    }
}

/// Builds a batch, applying one augmentation per frame and resizing to the network input size.
pub fn make_batch(net: &Network, frames: &[&FrameRecord], augs: &[Augmentation]) -> Result<Batch> {
    let size = net.config.encoder.input_size;
    let mut rgb = Vec::with_capacity(frames.len());
    let mut depth = Vec::with_capacity(frames.len());
    let mut flow = Vec::with_capacity(frames.len());
    let mut gt = Vec::with_capacity(frames.len() * size.0 * size.1);
    for (f, a) in frames.iter().zip(augs) {
        rgb.push(a.apply_rgb(&f.rgb));
        depth.push(a.apply_plane(&f.depth));
        flow.push(a.apply_rgb(&f.flow_vis));
        gt.extend(a.apply_plane(&f.gt.to_plane()).resize(size.0, size.1).data);
    }
    let triples: Vec<_> = (0..frames.len()).map(|i| (&rgb[i], &depth[i], &flow[i])).collect();
    let inputs = ModelInputs::from_images(&triples, size, net.dtype(), net.device())?;
    let gt = Tensor::from_vec(gt, (frames.len(), 1, size.0, size.1), net.device())?.to_dtype(net.dtype())?;
    Ok(Batch { inputs, gt })
}

/// One optimizer step on `batch`; returns the loss before the update.
pub fn train_step(net: &Network, batch: &Batch, cfg: &TrainConfig, state: &mut TrainState) -> Result<LossBreakdown> {
    let out = net.forward(&batch.inputs, true)?;
    let (loss, breakdown) = total_loss(&out, &batch.gt)?;
    if !breakdown.total.is_finite() {
        return Err(Error::TrainingDiverged {
            step: state.step,
            loss: breakdown.total,
        });
    }
    let grads = loss.backward()?;
    state.optimizer.step(net, &grads, cfg)?;
    state.step += 1;
    Ok(breakdown)
}

/// Trains for `cfg.steps` steps over shuffled epochs of `records`, writing one
/// JSON line per step to `log` when given. Returns the per-step losses.
pub fn train(
    net: &Network,
    records: &[FrameRecord],
    cfg: &TrainConfig,
    state: &mut TrainState,
    mut log: Option<&mut dyn Write>,
) -> Result<Vec<LossBreakdown>> {
    cfg.validate()?;
    if records.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..records.len()).collect();
    let mut cursor = records.len();
    let mut first_pass = true;
    let mut history = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let mut picked = Vec::with_capacity(cfg.batch_size);
        while picked.len() < cfg.batch_size.min(records.len()) {
            if cursor == order.len() {
                order.shuffle(&mut rng);
                cursor = 0;
                if !first_pass {
                    state.epoch += 1;
                }
                first_pass = false;
            }
            picked.push(&records[order[cursor]]);
            cursor += 1;
        }
        let augs: Vec<Augmentation> = picked
            .iter()
            .map(|f| Augmentation::sample(cfg, f.resolution(), &mut rng))
            .collect();
        let batch = make_batch(net, &picked, &augs)?;
        let step = state.step;
        let loss = train_step(net, &batch, cfg, state)?;
        if let Some(w) = log.as_deref_mut() {
            let rec = LogRecord {
                step,
                epoch: state.epoch,
                loss: loss.clone(),
            };
            let line = serde_json::to_string(&rec).expect("log record serializes");
            writeln!(w, "{line}").map_err(|e| Error::io("training log", e))?;
        }
        log::debug!("step {step}: loss {:.5}", loss.total);
        history.push(loss);
    }
    Ok(history)
}

/// Loss of `frames` under the current weights without updating anything.
pub fn evaluate_loss(net: &Network, frames: &[&FrameRecord], augs: &[Augmentation], train_mode: bool) -> Result<LossBreakdown> {
    let batch = make_batch(net, frames, augs)?;
    let out = net.forward(&batch.inputs, train_mode)?;
    Ok(total_loss(&out, &batch.gt)?.1)
}
