//! Multi-modal attention (MAM) and the coordinate / spatial attention
//! primitives used by the refinement fusion module.

use candle_core::{Tensor, D};

use crate::error::{Error, Result};
use crate::nn::{
    cat_channels, check_same_shape, hard_swish, sigmoid, softmax_last, BConv, BatchNorm, Conv2d, ConvSpec,
    ParamBuilder,
};

/// Levels on which the multi-modal attention is allowed to run.
pub const MAM_LEVELS: std::ops::RangeInclusive<usize> = 3..=5;

pub const COORDINATE_REDUCTION: usize = 8;
pub const SPATIAL_KERNEL: usize = 7;

/// Weights of one main/auxiliary attention pair.
///
/// `fuse` builds the joint feature from the concatenated pair; `query` and
/// `key` embed it for the affinity; `value_main`/`value_aux` embed the single
/// modalities, and the two projections restore the common width after the
/// affinity has been applied.
#[derive(Debug, Clone)]
pub struct MamParameters {
    pub fuse: BConv,
    pub query: Conv2d,
    pub key: Conv2d,
    pub value_main: Conv2d,
    pub value_aux: Conv2d,
    pub project_main: Conv2d,
    pub project_aux: Conv2d,
}

impl MamParameters {
    pub fn new(b: &mut ParamBuilder, channels: usize) -> Result<Self> {
        let inner = (channels / 2).max(1);
        Ok(Self {
            fuse: BConv::new(&mut b.pp("fuse"), ConvSpec::k3(2 * channels, channels))?,
            query: Conv2d::new(&mut b.pp("query"), ConvSpec::k1(channels, inner), true)?,
            key: Conv2d::new(&mut b.pp("key"), ConvSpec::k1(channels, inner), true)?,
            value_main: Conv2d::new(&mut b.pp("value_main"), ConvSpec::k1(channels, inner), true)?,
            value_aux: Conv2d::new(&mut b.pp("value_aux"), ConvSpec::k1(channels, inner), true)?,
            project_main: Conv2d::new(&mut b.pp("project_main"), ConvSpec::k1(inner, channels), true)?,
            project_aux: Conv2d::new(&mut b.pp("project_aux"), ConvSpec::k1(inner, channels), true)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MamOutput {
    /// Main-modality embedding propagated through the joint affinity.
    pub rgb_assisted: Tensor,
    /// Auxiliary feature plus its attended embedding.
    pub aux_enhanced: Tensor,
    /// Row-normalized `(N, HW, HW)` affinity.
    pub affinity: Tensor,
}

fn check_level(level: usize) -> Result<()> {
    if MAM_LEVELS.contains(&level) {
        Ok(())
    } else {
        Err(Error::Level(level))
    }
}

/// `(N, C, H, W)` to `(N, HW, C)`.
fn positions(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    Ok(x.reshape((n, c, h * w))?.transpose(1, 2)?.contiguous()?)
}

/// Cross-modal non-local attention for one auxiliary modality.
pub fn mam_forward(
    x_rgb: &Tensor,
    x_aux: &Tensor,
    level: usize,
    params: &MamParameters,
    train: bool,
) -> Result<MamOutput> {
    check_level(level)?;
    check_same_shape(x_rgb, x_aux, "mam inputs")?;
    let (n, _, h, w) = x_rgb.dims4()?;

    let joint = params.fuse.forward(&cat_channels(&[x_rgb, x_aux])?, train)?;
    let theta = positions(&params.query.forward(&joint)?)?;
    let phi = positions(&params.key.forward(&joint)?)?;
    let affinity = softmax_last(&theta.matmul(&phi.transpose(1, 2)?.contiguous()?)?)?;

    let attend = |value: &Conv2d, project: &Conv2d, x: &Tensor| -> Result<Tensor> {
        let g = positions(&value.forward(x)?)?;
        let inner = g.dim(2)?;
        let out = affinity.matmul(&g)?.transpose(1, 2)?.reshape((n, inner, h, w))?;
        project.forward(&out)
    };
    let rgb_assisted = attend(&params.value_main, &params.project_main, x_rgb)?;
    let aux_attended = attend(&params.value_aux, &params.project_aux, x_aux)?;
    Ok(MamOutput {
        rgb_assisted,
        aux_enhanced: (x_aux + aux_attended)?,
        affinity,
    })
}

/// All attention pairs of one level plus the block merging the main-modality
/// results.
#[derive(Debug, Clone)]
pub struct MamLevel {
    pub pairs: Vec<MamParameters>,
    pub combine: BConv,
}

impl MamLevel {
    pub fn new(b: &mut ParamBuilder, channels: usize, num_aux: usize) -> Result<Self> {
        let pairs = (0..num_aux)
            .map(|i| MamParameters::new(&mut b.pp(format!("aux{i}")), channels))
            .collect::<Result<Vec<_>>>()?;
        let combine = BConv::new(&mut b.pp("combine"), ConvSpec::k3(num_aux * channels, channels))?;
        Ok(Self { pairs, combine })
    }
}

/// Enhances the main feature and every auxiliary feature of one level.
///
/// Returns the enhanced main feature followed by the enhanced auxiliaries in
/// input order.
pub fn mam_enhance_level(
    x_main: &Tensor,
    x_aux: &[&Tensor],
    level: usize,
    params: &MamLevel,
    train: bool,
) -> Result<(Tensor, Vec<Tensor>)> {
    if x_aux.len() != params.pairs.len() {
        return Err(Error::Shape(format!(
            "{} auxiliary inputs for {} attention pairs",
            x_aux.len(),
            params.pairs.len()
        )));
    }
    let mut assisted = Vec::with_capacity(x_aux.len());
    let mut enhanced = Vec::with_capacity(x_aux.len());
    for (aux, pair) in x_aux.iter().zip(&params.pairs) {
        let out = mam_forward(x_main, aux, level, pair, train)?;
        assisted.push(out.rgb_assisted);
        enhanced.push(out.aux_enhanced);
    }
    let refs: Vec<&Tensor> = assisted.iter().collect();
    let main = params.combine.forward(&cat_channels(&refs)?, train)?;
    Ok((main, enhanced))
}

/// Coordinate attention: direction-aware pooling along each spatial axis, a
/// shared 1x1 transform, then one sigmoid gate per axis.
#[derive(Debug, Clone)]
pub struct CoordinateAttention {
    pub reduce: Conv2d,
    pub bn: BatchNorm,
    pub gate_h: Conv2d,
    pub gate_w: Conv2d,
}

/// Axis-factorized coordinate-attention gates.
#[derive(Debug, Clone)]
pub struct AxisAttention {
    /// `(N, C, H, 1)`
    pub along_h: Tensor,
    /// `(N, C, 1, W)`
    pub along_w: Tensor,
}

impl AxisAttention {
    /// Broadcast product of both gates, `(N, C, H, W)`.
    pub fn dense(&self) -> Result<Tensor> {
        Ok(self.along_h.broadcast_mul(&self.along_w)?)
    }

    /// `x * a_h * a_w`
    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        Ok(x.broadcast_mul(&self.along_h)?.broadcast_mul(&self.along_w)?)
    }
}

impl CoordinateAttention {
    pub fn new(b: &mut ParamBuilder, channels: usize, reduction: usize) -> Result<Self> {
        let mid = (channels / reduction.max(1)).max(8);
        Ok(Self {
            reduce: Conv2d::new(&mut b.pp("reduce"), ConvSpec::k1(channels, mid), true)?,
            bn: BatchNorm::new(&mut b.pp("bn"), mid)?,
            gate_h: Conv2d::new(&mut b.pp("gate_h"), ConvSpec::k1(mid, channels), true)?,
            gate_w: Conv2d::new(&mut b.pp("gate_w"), ConvSpec::k1(mid, channels), true)?,
        })
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<AxisAttention> {
        let (_, _, h, w) = x.dims4()?;
        let pooled_h = x.mean_keepdim(3)?; // (N, C, H, 1)
        let pooled_w = x.mean_keepdim(2)?.transpose(2, 3)?; // (N, C, W, 1)
        let y = Tensor::cat(&[&pooled_h, &pooled_w], 2)?;
        let y = hard_swish(&self.bn.forward(&self.reduce.forward(&y)?, train)?)?;
        let y_h = y.narrow(2, 0, h)?;
        let y_w = y.narrow(2, h, w)?.transpose(2, 3)?.contiguous()?;
        Ok(AxisAttention {
            along_h: sigmoid(&self.gate_h.forward(&y_h)?)?,
            along_w: sigmoid(&self.gate_w.forward(&y_w)?)?,
        })
    }
}

/// Applies coordinate attention with the given weights; same as
/// [`CoordinateAttention::forward`].
pub fn coordinate_attention(x: &Tensor, params: &CoordinateAttention, train: bool) -> Result<AxisAttention> {
    params.forward(x, train)
}

/// Channel-max and channel-mean maps, a 7x7 convolution, and a sigmoid.
#[derive(Debug, Clone)]
pub struct SpatialAttention {
    pub conv: Conv2d,
}

impl SpatialAttention {
    pub fn new(b: &mut ParamBuilder) -> Result<Self> {
        let spec = ConvSpec::k3(2, 1)
            .with_kernel(SPATIAL_KERNEL)
            .with_padding(SPATIAL_KERNEL / 2);
        Ok(Self {
            conv: Conv2d::new(&mut b.pp("conv"), spec, false)?,
        })
    }

    /// `(N, 1, H, W)` attention map.
    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let max = x.max_keepdim(1)?;
        let mean = x.mean_keepdim(1)?;
        sigmoid(&self.conv.forward(&Tensor::cat(&[&max, &mean], 1)?)?)
    }
}

pub fn spatial_attention(x: &Tensor, params: &SpatialAttention) -> Result<Tensor> {
    params.forward(x)
}

/// Largest deviation of an affinity's row sums from one.
pub fn affinity_row_error(affinity: &Tensor) -> Result<f64> {
    let sums = affinity.sum(D::Minus1)?;
    Ok(((sums - 1.0)?.abs()?.max_all()?.to_dtype(candle_core::DType::F64)?).to_scalar::<f64>()?)
}
