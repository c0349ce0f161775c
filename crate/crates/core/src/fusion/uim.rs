use candle_core::Tensor;

use crate::error::Result;
use crate::nn::{cat_channels, check_same_shape, BConv, Conv2d, ConvSpec, ParamBuilder};

/// Output stage of an interaction block.
#[derive(Debug, Clone)]
pub enum Merge {
    /// Convolution, batch normalization, ReLU.
    Activated(BConv),
    /// Plain 3x3 convolution with bias, for blocks that emit logits.
    Linear(Conv2d),
}

impl Merge {
    fn new(b: &mut ParamBuilder, spec: ConvSpec, linear: bool) -> Result<Self> {
        Ok(if linear {
            Merge::Linear(Conv2d::new(b, spec, true)?)
        } else {
            Merge::Activated(BConv::new(b, spec)?)
        })
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        match self {
            Merge::Activated(b) => b.forward(x, train),
            Merge::Linear(c) => c.forward(x),
        }
    }
}

/// The four interaction branches of a [`Uim`] before merging.
#[derive(Debug, Clone)]
pub struct UimBranches {
    pub v_cat: Tensor,
    pub v_mul: Tensor,
    pub v_max: Tensor,
    pub v_sub: Tensor,
}

/// Universal interaction of two same-shaped tensors: channel-aligned
/// concatenation, product, maximum and difference, concatenated and merged
/// back to the input width by a 3x3 block.
#[derive(Debug, Clone)]
pub struct Uim {
    pub align: BConv,
    pub merge: Merge,
}

impl Uim {
    pub fn new(b: &mut ParamBuilder, channels: usize) -> Result<Self> {
        Self::build(b, channels, false)
    }

    /// Variant whose merge stage is a plain convolution, so the output is an
    /// unbounded logit.
    pub fn new_linear(b: &mut ParamBuilder, channels: usize) -> Result<Self> {
        Self::build(b, channels, true)
    }

    fn build(b: &mut ParamBuilder, channels: usize, linear: bool) -> Result<Self> {
        Ok(Self {
            align: BConv::new(&mut b.pp("align"), ConvSpec::k3(2 * channels, channels))?,
            merge: Merge::new(&mut b.pp("merge"), ConvSpec::k3(4 * channels, channels), linear)?,
        })
    }

    pub fn branches(&self, a: &Tensor, b: &Tensor, train: bool) -> Result<UimBranches> {
        check_same_shape(a, b, "uim inputs")?;
        Ok(UimBranches {
            v_cat: self.align.forward(&cat_channels(&[a, b])?, train)?,
            v_mul: (a * b)?,
            v_max: a.maximum(b)?,
            v_sub: (a - b)?,
        })
    }

    pub fn forward(&self, a: &Tensor, b: &Tensor, train: bool) -> Result<Tensor> {
        let v = self.branches(a, b, train)?;
        self.merge
            .forward(&cat_channels(&[&v.v_cat, &v.v_mul, &v.v_max, &v.v_sub])?, train)
    }
}

pub fn uim(a: &Tensor, b: &Tensor, params: &Uim, train: bool) -> Result<Tensor> {
    params.forward(a, b, train)
}

/// Three-input interaction used for simultaneous ("equal") fusion. Product
/// and maximum span all three inputs; subtraction is taken pairwise and the
/// three differences are concatenated.
#[derive(Debug, Clone)]
pub struct EqualUim {
    pub align: BConv,
    pub merge: Merge,
}

impl EqualUim {
    pub fn new(b: &mut ParamBuilder, channels: usize, linear: bool) -> Result<Self> {
        Ok(Self {
            align: BConv::new(&mut b.pp("align"), ConvSpec::k3(3 * channels, channels))?,
            merge: Merge::new(&mut b.pp("merge"), ConvSpec::k3(6 * channels, channels), linear)?,
        })
    }

    pub fn forward(&self, a: &Tensor, b: &Tensor, c: &Tensor, train: bool) -> Result<Tensor> {
        check_same_shape(a, b, "equal fusion inputs")?;
        check_same_shape(a, c, "equal fusion inputs")?;
        let v_cat = self.align.forward(&cat_channels(&[a, b, c])?, train)?;
        let v_mul = ((a * b)? * c)?;
        let v_max = a.maximum(b)?.maximum(c)?;
        let ab = (a - b)?;
        let ac = (a - c)?;
        let bc = (b - c)?;
        self.merge
            .forward(&cat_channels(&[&v_cat, &v_mul, &v_max, &ab, &ac, &bc])?, train)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    /// Auxiliaries first, then the main modality.
    Progressive,
    /// All three modalities in one three-input interaction.
    Equal,
}

/// Merges the main feature with one or two auxiliary features.
#[derive(Debug, Clone)]
pub enum MultiFusion {
    Pair(Uim),
    Progressive { aux: Uim, main: Uim },
    Equal(EqualUim),
}

impl MultiFusion {
    pub fn new(b: &mut ParamBuilder, channels: usize, num_aux: usize, mode: FusionMode, linear: bool) -> Result<Self> {
        let make = |b: &mut ParamBuilder, lin| {
            if lin {
                Uim::new_linear(b, channels)
            } else {
                Uim::new(b, channels)
            }
        };
        Ok(match (num_aux, mode) {
            (1, _) => MultiFusion::Pair(make(&mut b.pp("main"), linear)?),
            (_, FusionMode::Progressive) => MultiFusion::Progressive {
                aux: make(&mut b.pp("aux"), false)?,
                main: make(&mut b.pp("main"), linear)?,
            },
            (_, FusionMode::Equal) => MultiFusion::Equal(EqualUim::new(&mut b.pp("equal"), channels, linear)?),
        })
    }

    pub fn forward(&self, main: &Tensor, aux: &[&Tensor], train: bool) -> Result<Tensor> {
        match (self, aux) {
            (MultiFusion::Pair(u), [a]) => u.forward(main, a, train),
            (MultiFusion::Progressive { aux: inner, main: outer }, [a, b]) => {
                let merged = inner.forward(a, b, train)?;
                outer.forward(main, &merged, train)
            }
            (MultiFusion::Equal(u), [a, b]) => u.forward(main, a, b, train),
            _ => Err(crate::Error::Shape(format!(
                "fusion block configured differently from the {} auxiliary inputs given",
                aux.len()
            ))),
        }
    }
}
