use candle_core::Tensor;

use crate::encoder::NUM_LEVELS;
use crate::error::{Error, Result};
use crate::nn::{cat_channels, resize_bilinear, BConv, Conv2d, ConvSpec, ParamBuilder};

/// Top-down U-Net decoder with one single-channel prediction head per level.
#[derive(Debug, Clone)]
pub struct Decoder {
    pub blocks: Vec<BConv>,
    pub heads: Vec<Conv2d>,
}

#[derive(Debug, Clone)]
pub struct DecoderOutput {
    /// Decoder features, finest first, at their native level sizes.
    pub features: Vec<Tensor>,
    /// Per-level logits resized to the output size, finest first.
    pub logits: Vec<Tensor>,
}

impl Decoder {
    pub fn new(b: &mut ParamBuilder, channels: usize) -> Result<Self> {
        let blocks = (0..NUM_LEVELS)
            .map(|i| {
                let cin = if i == NUM_LEVELS - 1 { channels } else { 2 * channels };
                BConv::new(&mut b.pp(format!("block{}", i + 1)), ConvSpec::k3(cin, channels))
            })
            .collect::<Result<_>>()?;
        let heads = (0..NUM_LEVELS)
            .map(|i| Conv2d::new(&mut b.pp(format!("head{}", i + 1)), ConvSpec::k3(channels, 1), true))
            .collect::<Result<_>>()?;
        Ok(Self { blocks, heads })
    }

    /// `fused` holds the five fused levels, finest first.
    pub fn forward(&self, fused: &[Tensor], out_size: (usize, usize), train: bool) -> Result<DecoderOutput> {
        if fused.len() != NUM_LEVELS {
            return Err(Error::Shape(format!("decoder needs {NUM_LEVELS} levels, got {}", fused.len())));
        }
        let mut features: Vec<Option<Tensor>> = vec![None; NUM_LEVELS];
        let mut deeper: Option<Tensor> = None;
        for i in (0..NUM_LEVELS).rev() {
            let f = &fused[i];
            let input = match &deeper {
                None => f.clone(),
                Some(d) => {
                    let (_, _, h, w) = f.dims4()?;
                    cat_channels(&[&resize_bilinear(d, h, w)?, f])?
                }
            };
            let y = self.blocks[i].forward(&input, train)?;
            deeper = Some(y.clone());
            features[i] = Some(y);
        }
        let features: Vec<Tensor> = features.into_iter().map(|f| f.expect("filled above")).collect();
        let logits = features
            .iter()
            .zip(&self.heads)
            .map(|(f, head)| resize_bilinear(&head.forward(f)?, out_size.0, out_size.1))
            .collect::<Result<Vec<_>>>()?;
        Ok(DecoderOutput { features, logits })
    }
}

pub fn decode(fused: &[Tensor], params: &Decoder, out_size: (usize, usize), train: bool) -> Result<DecoderOutput> {
    params.forward(fused, out_size, train)
}
