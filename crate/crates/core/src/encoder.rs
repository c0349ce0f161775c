//! Per-modality encoder streams.
//!
//! Each stream is a five-stage convolutional trunk. The deepest stage passes
//! through an atrous spatial pyramid pooling head, and every level is then
//! compressed by a 3x3 [`BConv`] to a shared channel width. Level `i` has
//! stride `2^i`.

use std::fmt;
use std::str::FromStr;

use candle_core::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{BConv, ConvSpec, ParamBuilder, ParamGroup};

pub const NUM_LEVELS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Rgb,
    Depth,
    Flow,
}

impl Modality {
    pub const ALL: [Modality; 3] = [Modality::Rgb, Modality::Depth, Modality::Flow];

    pub fn as_str(self) -> &'static str {
        match self {
            Modality::Rgb => "rgb",
            Modality::Depth => "depth",
            Modality::Flow => "flow",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rgb" => Ok(Modality::Rgb),
            "depth" => Ok(Modality::Depth),
            "flow" => Ok(Modality::Flow),
            other => Err(Error::Config(format!("unknown modality `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalePreset {
    /// Plain five-stage trunk for desk-scale training.
    Toy,
    /// ResNet-34 trunk.
    Paper,
    /// Tiny plain trunk for gradient checking. Input sizes need not be
    /// multiples of 32; spatial sizes follow `ceil(n / 2)` per stage.
    Micro,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EncoderConfig {
    pub base_widths: [usize; NUM_LEVELS],
    pub common_width: usize,
    pub input_size: (usize, usize),
    pub scale_preset: ScalePreset,
}

impl EncoderConfig {
    pub fn toy(input: usize) -> Self {
        Self {
            base_widths: [16, 24, 32, 48, 64],
            common_width: 16,
            input_size: (input, input),
            scale_preset: ScalePreset::Toy,
        }
    }

    pub fn paper() -> Self {
        Self {
            base_widths: [64, 64, 128, 256, 512],
            common_width: 64,
            input_size: (448, 448),
            scale_preset: ScalePreset::Paper,
        }
    }

    pub fn micro(input: usize) -> Self {
        Self {
            base_widths: [4, 4, 6, 8, 8],
            common_width: 4,
            input_size: (input, input),
            scale_preset: ScalePreset::Micro,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_widths.contains(&0) || self.common_width == 0 {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        if self.scale_preset == ScalePreset::Paper && self.base_widths != [64, 64, 128, 256, 512] {
            return Err(Error::Config(
                "the paper preset uses the ResNet-34 widths (64, 64, 128, 256, 512)".into(),
            ));
        }
        self.check_input(self.input_size.0, self.input_size.1)
    }

    pub fn check_input(&self, height: usize, width: usize) -> Result<()> {
        if height == 0 || width == 0 {
            return Err(Error::Shape("empty input".into()));
        }
        if self.scale_preset != ScalePreset::Micro && (!height.is_multiple_of(32) || !width.is_multiple_of(32)) {
            return Err(Error::Shape(format!(
                "input {height}x{width} is not divisible by 32"
            )));
        }
        Ok(())
    }

    /// Spatial-size-changing convolutions of each trunk stage, in order.
    fn stage_layouts(&self) -> [Vec<ConvSpec>; NUM_LEVELS] {
        let w = self.base_widths;
        match self.scale_preset {
            ScalePreset::Toy | ScalePreset::Micro => std::array::from_fn(|i| {
                let cin = if i == 0 { 3 } else { w[i - 1] };
                vec![ConvSpec::k3(cin, w[i]).with_stride(2)]
            }),
            ScalePreset::Paper => [
                vec![ConvSpec::k3(3, w[0]).with_kernel(7).with_stride(2).with_padding(3)],
                // 3x3/2 max pool
                vec![ConvSpec::k3(w[0], w[0]).with_stride(2)],
                vec![ConvSpec::k3(w[1], w[2]).with_stride(2)],
                vec![ConvSpec::k3(w[2], w[3]).with_stride(2)],
                vec![ConvSpec::k3(w[3], w[4]).with_stride(2)],
            ],
        }
    }

    /// `(channels, height, width)` of every compressed level for an input of
    /// the given size, derived from the trunk's convolution arithmetic.
    pub fn level_shapes(&self, height: usize, width: usize) -> [(usize, usize, usize); NUM_LEVELS] {
        let layouts = self.stage_layouts();
        let (mut h, mut w) = (height, width);
        std::array::from_fn(|i| {
            for spec in &layouts[i] {
                h = spec.output_len(h);
                w = spec.output_len(w);
            }
            (self.common_width, h, w)
        })
    }
}

/// Five compressed feature maps of one modality, finest first.
#[derive(Debug, Clone)]
pub struct FeaturePyramid {
    pub modality: Modality,
    pub levels: Vec<Tensor>,
}

impl FeaturePyramid {
    pub fn level(&self, i: usize) -> &Tensor {
        &self.levels[i - 1]
    }

    pub fn shapes(&self) -> Result<Vec<(usize, usize, usize)>> {
        self.levels
            .iter()
            .map(|t| {
                let (_, c, h, w) = t.dims4()?;
                Ok((c, h, w))
            })
            .collect()
    }
}

#[derive(Debug, Clone)]
struct BasicBlock {
    conv1: BConv,
    conv2: crate::nn::Conv2d,
    bn2: crate::nn::BatchNorm,
    shortcut: Option<(crate::nn::Conv2d, crate::nn::BatchNorm)>,
}

impl BasicBlock {
    fn new(b: &mut ParamBuilder, cin: usize, cout: usize, stride: usize) -> Result<Self> {
        let conv1 = BConv::new(&mut b.pp("conv1"), ConvSpec::k3(cin, cout).with_stride(stride))?;
        let conv2 = crate::nn::Conv2d::new(&mut b.pp("conv2"), ConvSpec::k3(cout, cout), false)?;
        let bn2 = crate::nn::BatchNorm::new(&mut b.pp("bn2"), cout)?;
        let shortcut = if stride != 1 || cin != cout {
            let mut s = b.pp("downsample");
            Some((
                crate::nn::Conv2d::new(&mut s.pp("conv"), ConvSpec::k1(cin, cout).with_stride(stride), false)?,
                crate::nn::BatchNorm::new(&mut s.pp("bn"), cout)?,
            ))
        } else {
            None
        };
        Ok(Self {
            conv1,
            conv2,
            bn2,
            shortcut,
        })
    }

    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let y = self.conv1.forward(x, train)?;
        let y = self.bn2.forward(&self.conv2.forward(&y)?, train)?;
        let skip = match &self.shortcut {
            Some((conv, bn)) => bn.forward(&conv.forward(x)?, train)?,
            None => x.clone(),
        };
        Ok((y + skip)?.relu()?)
    }
}

#[derive(Debug, Clone)]
enum Stage {
    Plain(Vec<BConv>),
    Stem(BConv),
    Residual { pool: bool, blocks: Vec<BasicBlock> },
}

impl Stage {
    fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        match self {
            Stage::Plain(convs) => {
                let mut y = x.clone();
                for c in convs {
                    y = c.forward(&y, train)?;
                }
                Ok(y)
            }
            Stage::Stem(c) => c.forward(x, train),
            Stage::Residual { pool, blocks } => {
                let mut y = if *pool {
                    // inputs are post-ReLU, so zero padding acts as -inf padding
                    x.pad_with_zeros(2, 1, 1)?
                        .pad_with_zeros(3, 1, 1)?
                        .max_pool2d_with_stride(3, 2)?
                } else {
                    x.clone()
                };
                for blk in blocks {
                    y = blk.forward(&y, train)?;
                }
                Ok(y)
            }
        }
    }
}

/// Atrous spatial pyramid pooling: a 1x1 branch, three dilated 3x3 branches
/// (rates 6, 12, 18) and an image-pooling branch, merged by a 1x1 [`BConv`].
#[derive(Debug, Clone)]
pub struct Aspp {
    branches: Vec<BConv>,
    pooled: BConv,
    project: BConv,
}

pub const ASPP_RATES: [usize; 3] = [6, 12, 18];

impl Aspp {
    pub fn new(b: &mut ParamBuilder, channels: usize) -> Result<Self> {
        let inner = (channels / 2).max(1);
        let mut branches = vec![BConv::new(&mut b.pp("b0"), ConvSpec::k1(channels, inner))?];
        for (i, &rate) in ASPP_RATES.iter().enumerate() {
            let spec = ConvSpec::k3(channels, inner).with_dilation(rate).with_padding(rate);
            branches.push(BConv::new(&mut b.pp(format!("b{}", i + 1)), spec)?);
        }
        let pooled = BConv::new(&mut b.pp("pool"), ConvSpec::k1(channels, inner))?;
        let project = BConv::new(&mut b.pp("project"), ConvSpec::k1(5 * inner, channels))?;
        Ok(Self {
            branches,
            pooled,
            project,
        })
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (n, _, h, w) = x.dims4()?;
        let mut outs = Vec::with_capacity(5);
        for b in &self.branches {
            outs.push(b.forward(x, train)?);
        }
        let g = self.pooled.forward(&x.mean_keepdim(2)?.mean_keepdim(3)?, train)?;
        let c = g.dim(1)?;
        outs.push(g.broadcast_as((n, c, h, w))?.contiguous()?);
        let refs: Vec<&Tensor> = outs.iter().collect();
        self.project.forward(&Tensor::cat(&refs, 1)?, train)
    }
}

/// One modality's encoder: trunk, ASPP on level 5, per-level compression.
#[derive(Debug, Clone)]
pub struct EncoderStream {
    pub modality: Modality,
    config: EncoderConfig,
    stages: Vec<Stage>,
    aspp: Aspp,
    compress: Vec<BConv>,
}

impl EncoderStream {
    pub fn new(b: &mut ParamBuilder, modality: Modality, config: &EncoderConfig) -> Result<Self> {
        config.validate()?;
        let w = config.base_widths;
        let mut stages = Vec::with_capacity(NUM_LEVELS);
        {
            let mut trunk = b.group(ParamGroup::Backbone);
            let mut trunk = trunk.pp("trunk");
            match config.scale_preset {
                ScalePreset::Toy | ScalePreset::Micro => {
                    for (i, spec) in config.stage_layouts().iter().enumerate() {
                        let mut s = trunk.pp(format!("stage{}", i + 1));
                        let down = BConv::new(&mut s.pp("down"), spec[0])?;
                        let refine = BConv::new(&mut s.pp("refine"), ConvSpec::k3(w[i], w[i]))?;
                        stages.push(Stage::Plain(vec![down, refine]));
                    }
                }
                ScalePreset::Paper => {
                    let stem = ConvSpec::k3(3, w[0]).with_kernel(7).with_stride(2).with_padding(3);
                    stages.push(Stage::Stem(BConv::new(&mut trunk.pp("stem"), stem)?));
                    let depths = [3, 4, 6, 3];
                    let mut cin = w[0];
                    for (li, &depth) in depths.iter().enumerate() {
                        let cout = w[li + 1];
                        let mut layer = trunk.pp(format!("layer{}", li + 1));
                        let mut blocks = Vec::with_capacity(depth);
                        for bi in 0..depth {
                            let stride = if bi == 0 && li > 0 { 2 } else { 1 };
                            blocks.push(BasicBlock::new(&mut layer.pp(bi.to_string()), cin, cout, stride)?);
                            cin = cout;
                        }
                        stages.push(Stage::Residual {
                            pool: li == 0,
                            blocks,
                        });
                    }
                }
            }
        }
        let aspp = Aspp::new(&mut b.pp("aspp"), w[4])?;
        let compress = (0..NUM_LEVELS)
            .map(|i| BConv::new(&mut b.pp(format!("cp{}", i + 1)), ConvSpec::k3(w[i], config.common_width)))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            modality,
            config: config.clone(),
            stages,
            aspp,
            compress,
        })
    }

    pub fn config(&self) -> &EncoderConfig {
        &self.config
    }

    /// Encodes an `(N, 3, H, W)` or `(N, 1, H, W)` batch with values in
    /// `[0, 1]`. Single-channel inputs are replicated to three channels.
    pub fn encode(&self, image: &Tensor, train: bool) -> Result<FeaturePyramid> {
        let (n, c, h, w) = image.dims4()?;
        self.config.check_input(h, w)?;
        let x = match c {
            3 => image.clone(),
            1 => image.broadcast_as((n, 3, h, w))?.contiguous()?,
            other => {
                return Err(Error::Shape(format!(
                    "{} input has {other} channels, expected 1 or 3",
                    self.modality
                )))
            }
        };
        let mut raw = Vec::with_capacity(NUM_LEVELS);
        let mut y = x;
        for stage in &self.stages {
            y = stage.forward(&y, train)?;
            raw.push(y.clone());
        }
        raw[NUM_LEVELS - 1] = self.aspp.forward(&raw[NUM_LEVELS - 1], train)?;
        let levels = raw
            .iter()
            .zip(&self.compress)
            .map(|(f, cp)| cp.forward(f, train))
            .collect::<Result<Vec<_>>>()?;
        Ok(FeaturePyramid {
            modality: self.modality,
            levels,
        })
    }
}

/// The independent encoder streams of a model.
#[derive(Debug, Clone)]
pub struct EncoderSet {
    pub streams: Vec<EncoderStream>,
}

impl EncoderSet {
    pub fn stream(&self, modality: Modality) -> Option<&EncoderStream> {
        self.streams.iter().find(|s| s.modality == modality)
    }

    pub fn modalities(&self) -> Vec<Modality> {
        self.streams.iter().map(|s| s.modality).collect()
    }
}

/// Builds one parameter-independent stream per enabled modality. RGB is
/// mandatory; leaving out depth gives the two-stream RGB + flow variant.
pub fn build_three_streams(
    b: &mut ParamBuilder,
    config: &EncoderConfig,
    enabled: &[Modality],
) -> Result<EncoderSet> {
    if !enabled.contains(&Modality::Rgb) {
        return Err(Error::Config("the rgb stream cannot be disabled".into()));
    }
    let mut streams = Vec::new();
    for m in Modality::ALL {
        if enabled.contains(&m) {
            streams.push(EncoderStream::new(&mut b.pp(m.as_str()), m, config)?);
        }
    }
    Ok(EncoderSet { streams })
}
