//! Coarse map prediction from the deepest features and the gating paths that
//! use it to clean up low-level features.

use candle_core::Tensor;

use super::uim::{FusionMode, MultiFusion};
use crate::error::Result;
use crate::nn::{resize_bilinear, sigmoid, BConv, Conv2d, ConvSpec, ParamBuilder};

/// Two [`BConv`] blocks and a convolution collapsing a level-5 feature to a
/// single-channel logit of the same spatial size.
#[derive(Debug, Clone)]
pub struct LastConv {
    pub first: BConv,
    pub second: BConv,
    pub out: Conv2d,
}

impl LastConv {
    pub fn new(b: &mut ParamBuilder, channels: usize) -> Result<Self> {
        Ok(Self {
            first: BConv::new(&mut b.pp("first"), ConvSpec::k3(channels, channels))?,
            second: BConv::new(&mut b.pp("second"), ConvSpec::k3(channels, channels))?,
            out: Conv2d::new(&mut b.pp("out"), ConvSpec::k3(channels, 1), true)?,
        })
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let y = self.second.forward(&self.first.forward(x, train)?, train)?;
        self.out.forward(&y)
    }
}

#[derive(Debug, Clone)]
pub struct CoarseMapParameters {
    /// One head per stream; main first.
    pub last_conv: Vec<LastConv>,
    /// Single-channel fusion of the per-stream logits.
    pub fusion: MultiFusion,
}

impl CoarseMapParameters {
    pub fn new(b: &mut ParamBuilder, channels: usize, num_aux: usize, mode: FusionMode) -> Result<Self> {
        let last_conv = (0..=num_aux)
            .map(|i| LastConv::new(&mut b.pp(format!("last{i}")), channels))
            .collect::<Result<_>>()?;
        let fusion = MultiFusion::new(&mut b.pp("fusion"), 1, num_aux, mode, true)?;
        Ok(Self { last_conv, fusion })
    }
}

#[derive(Debug, Clone)]
pub struct CoarseMapBundle {
    /// Per-stream single-channel logits, main first.
    pub per_stream_logits: Vec<Tensor>,
    /// Fused coarse logit at level-5 resolution.
    pub coarse_map: Tensor,
}

impl CoarseMapBundle {
    /// Sigmoid gate resized to `height x width`.
    pub fn gate(&self, height: usize, width: usize) -> Result<Tensor> {
        sigmoid(&resize_bilinear(&self.coarse_map, height, width)?)
    }
}

/// `level5` holds the deepest feature of every stream, main first.
pub fn coarse_map(level5: &[&Tensor], params: &CoarseMapParameters, train: bool) -> Result<CoarseMapBundle> {
    let per_stream_logits = level5
        .iter()
        .zip(&params.last_conv)
        .map(|(x, lc)| lc.forward(x, train))
        .collect::<Result<Vec<_>>>()?;
    let aux: Vec<&Tensor> = per_stream_logits[1..].iter().collect();
    let coarse_map = params.fusion.forward(&per_stream_logits[0], &aux, train)?;
    Ok(CoarseMapBundle {
        per_stream_logits,
        coarse_map,
    })
}

/// `f * gate + f`, with the single-channel gate broadcast over channels.
pub fn hmap_refine_with_gate(f: &Tensor, gate: &Tensor) -> Result<Tensor> {
    Ok((f.broadcast_mul(gate)? + f)?)
}

/// Gates `f` with the coarse map resized to its spatial size.
pub fn hmap_refine(f: &Tensor, cm: &CoarseMapBundle) -> Result<Tensor> {
    let (_, _, h, w) = f.dims4()?;
    hmap_refine_with_gate(f, &cm.gate(h, w)?)
}
