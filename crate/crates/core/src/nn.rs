//! Parameter storage and the small set of layers every block is built from.
//!
//! Parameters are created through a [`ParamBuilder`] that draws initial values
//! from a seeded ChaCha stream, so a given seed always yields the same network.
//! Each parameter carries a hierarchical name (`rgb.trunk.stage1.conv.weight`)
//! used as its checkpoint key, and an optimizer group.

use std::collections::HashMap;

use candle_core::{DType, Device, Tensor, Var, D};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image_ops::interpolation_matrix;

/// Optimizer group. Backbone parameters train with the smaller learning rate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Backbone,
    Head,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    /// Receives gradients.
    Weight,
    /// Running statistics; saved in checkpoints, never optimized.
    Buffer,
}

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub var: Var,
    pub group: ParamGroup,
    pub kind: ParamKind,
}

#[derive(Debug)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
    dtype: DType,
    device: Device,
}

impl ParamStore {
    pub fn new(dtype: DType, device: Device) -> Self {
        Self {
            params: Vec::new(),
            index: HashMap::new(),
            dtype,
            device,
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.index.get(name).map(|&i| &self.params[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn trainable(&self) -> impl Iterator<Item = &Param> {
        self.params.iter().filter(|p| p.kind == ParamKind::Weight)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of trainable scalars.
    pub fn num_weights(&self) -> usize {
        self.trainable().map(|p| p.var.elem_count()).sum()
    }

    pub fn to_tensors(&self) -> HashMap<String, Tensor> {
        self.params
            .iter()
            .map(|p| (p.name.clone(), p.var.as_tensor().clone()))
            .collect()
    }

    /// Overwrites every stored parameter with the tensor of the same name.
    pub fn load_tensors(&self, tensors: &HashMap<String, Tensor>) -> Result<()> {
        for p in &self.params {
            let t = tensors
                .get(&p.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {}", p.name)))?;
            if t.dims() != p.var.dims() {
                return Err(Error::Checkpoint(format!(
                    "tensor {} has shape {:?}, expected {:?}",
                    p.name,
                    t.dims(),
                    p.var.dims()
                )));
            }
            p.var.set(&t.to_dtype(self.dtype)?.to_device(&self.device)?)?;
        }
        if tensors.len() != self.params.len() {
            let extra: Vec<_> = tensors
                .keys()
                .filter(|k| !self.index.contains_key(*k))
                .cloned()
                .collect();
            return Err(Error::Checkpoint(format!("unexpected tensors: {extra:?}")));
        }
        Ok(())
    }

    fn insert(&mut self, param: Param) -> Result<Var> {
        if self.index.contains_key(&param.name) {
            return Err(Error::Config(format!("duplicate parameter {}", param.name)));
        }
        let var = param.var.clone();
        self.index.insert(param.name.clone(), self.params.len());
        self.params.push(param);
        Ok(var)
    }
}

/// Scoped handle for creating named parameters.
pub struct ParamBuilder<'a> {
    store: &'a mut ParamStore,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
    group: ParamGroup,
}

impl<'a> ParamBuilder<'a> {
    pub fn new(store: &'a mut ParamStore, rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            store,
            rng,
            prefix: String::new(),
            group: ParamGroup::Head,
        }
    }

    /// Child scope with `name` appended to the path.
    pub fn pp(&mut self, name: impl AsRef<str>) -> ParamBuilder<'_> {
        let prefix = if self.prefix.is_empty() {
            name.as_ref().to_string()
        } else {
            format!("{}.{}", self.prefix, name.as_ref())
        };
        ParamBuilder {
            store: &mut *self.store,
            rng: &mut *self.rng,
            prefix,
            group: self.group,
        }
    }

    /// Same scope, different optimizer group.
    pub fn group(&mut self, group: ParamGroup) -> ParamBuilder<'_> {
        ParamBuilder {
            store: &mut *self.store,
            rng: &mut *self.rng,
            prefix: self.prefix.clone(),
            group,
        }
    }

    fn full_name(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        }
    }

    fn create(&mut self, name: &str, shape: &[usize], values: Vec<f64>, kind: ParamKind) -> Result<Var> {
        let t = Tensor::from_vec(values, shape, &self.store.device)?.to_dtype(self.store.dtype)?;
        let param = Param {
            name: self.full_name(name),
            var: Var::from_tensor(&t)?,
            group: self.group,
            kind,
        };
        self.store.insert(param)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        let dist = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
        let values = (0..n).map(|_| dist.sample(&mut *self.rng)).collect();
        self.create(name, shape, values, ParamKind::Weight)
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        let values = (0..n).map(|_| self.rng.random_range(-bound..=bound)).collect();
        self.create(name, shape, values, ParamKind::Weight)
    }

    pub fn constant(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        self.create(name, shape, vec![value; n], ParamKind::Weight)
    }

    pub fn buffer(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        let n: usize = shape.iter().product();
        self.create(name, shape, vec![value; n], ParamKind::Buffer)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub dilation: usize,
}

impl ConvSpec {
    /// Same-size 3x3 convolution.
    pub fn k3(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: 3,
            stride: 1,
            padding: 1,
            dilation: 1,
        }
    }

    pub fn k1(in_channels: usize, out_channels: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            kernel: 1,
            stride: 1,
            padding: 0,
            dilation: 1,
        }
    }

    pub fn with_stride(mut self, stride: usize) -> Self {
        self.stride = stride;
        self
    }

    pub fn with_padding(mut self, padding: usize) -> Self {
        self.padding = padding;
        self
    }

    pub fn with_dilation(mut self, dilation: usize) -> Self {
        self.dilation = dilation;
        self
    }

    pub fn with_kernel(mut self, kernel: usize) -> Self {
        self.kernel = kernel;
        self
    }

    /// Output length along one spatial axis.
    pub fn output_len(&self, input: usize) -> usize {
        (input + 2 * self.padding - self.dilation * (self.kernel - 1) - 1) / self.stride + 1
    }
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Var,
    pub bias: Option<Var>,
    pub spec: ConvSpec,
}

impl Conv2d {
    pub fn new(b: &mut ParamBuilder, spec: ConvSpec, bias: bool) -> Result<Self> {
        let fan_in = spec.in_channels * spec.kernel * spec.kernel;
        let std = (2.0 / fan_in as f64).sqrt();
        let weight = b.normal(
            "weight",
            &[spec.out_channels, spec.in_channels, spec.kernel, spec.kernel],
            std,
        )?;
        let bias = if bias {
            let bound = 1.0 / (fan_in as f64).sqrt();
            Some(b.uniform("bias", &[spec.out_channels], bound)?)
        } else {
            None
        };
        Ok(Self { weight, bias, spec })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        let y = x.conv2d(
            self.weight.as_tensor(),
            self.spec.padding,
            self.spec.stride,
            self.spec.dilation,
            1,
        )?;
        match &self.bias {
            Some(b) => Ok(y.broadcast_add(&b.as_tensor().reshape((1, (), 1, 1))?)?),
            None => Ok(y),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub weight: Var,
    pub bias: Var,
    pub running_mean: Var,
    pub running_var: Var,
    pub eps: f64,
    pub momentum: f64,
}

impl BatchNorm {
    pub fn new(b: &mut ParamBuilder, channels: usize) -> Result<Self> {
        Ok(Self {
            weight: b.constant("weight", &[channels], 1.0)?,
            bias: b.constant("bias", &[channels], 0.0)?,
            running_mean: b.buffer("running_mean", &[channels], 0.0)?,
            running_var: b.buffer("running_var", &[channels], 1.0)?,
            eps: 1e-5,
            momentum: 0.1,
        })
    }

    /// In training mode normalizes with batch statistics over `(N, H, W)` and
    /// folds them into the running estimates; otherwise uses the running
    /// estimates.
    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4()?;
        let xhat = if train {
            let count = (n * h * w) as f64;
            let mean = (x.sum_keepdim((0, 2, 3))? / count)?;
            let centered = x.broadcast_sub(&mean)?;
            let var = (centered.sqr()?.sum_keepdim((0, 2, 3))? / count)?;
            let unbiased = if count > 1.0 {
                (var.detach() * (count / (count - 1.0)))?
            } else {
                var.detach()
            };
            let m = self.momentum;
            let rm = ((self.running_mean.as_tensor() * (1.0 - m))?
                + (mean.detach().reshape(c)? * m)?)?;
            let rv = ((self.running_var.as_tensor() * (1.0 - m))? + (unbiased.reshape(c)? * m)?)?;
            self.running_mean.set(&rm)?;
            self.running_var.set(&rv)?;
            centered.broadcast_div(&(var + self.eps)?.sqrt()?)?
        } else {
            let rm = self.running_mean.as_tensor().reshape((1, c, 1, 1))?;
            let rv = self.running_var.as_tensor().reshape((1, c, 1, 1))?;
            x.broadcast_sub(&rm)?.broadcast_div(&(rv + self.eps)?.sqrt()?)?
        };
        let wgt = self.weight.as_tensor().reshape((1, c, 1, 1))?;
        let bias = self.bias.as_tensor().reshape((1, c, 1, 1))?;
        Ok(xhat.broadcast_mul(&wgt)?.broadcast_add(&bias)?)
    }
}

/// Convolution, batch normalization, ReLU.
#[derive(Debug, Clone)]
pub struct BConv {
    pub conv: Conv2d,
    pub bn: BatchNorm,
}

impl BConv {
    pub fn new(b: &mut ParamBuilder, spec: ConvSpec) -> Result<Self> {
        let conv = Conv2d::new(&mut b.pp("conv"), spec, false)?;
        let bn = BatchNorm::new(&mut b.pp("bn"), spec.out_channels)?;
        Ok(Self { conv, bn })
    }

    pub fn forward(&self, x: &Tensor, train: bool) -> Result<Tensor> {
        Ok(self.bn.forward(&self.conv.forward(x)?, train)?.relu()?)
    }

    pub fn spec(&self) -> ConvSpec {
        self.conv.spec
    }
}

pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    Ok(candle_nn::ops::sigmoid(x)?)
}

/// `x * relu6(x + 3) / 6`
pub fn hard_swish(x: &Tensor) -> Result<Tensor> {
    let gate = (x + 3.0)?.relu()?.minimum(6.0)?;
    Ok(((x * gate)? / 6.0)?)
}

/// Softmax along the last dimension.
pub fn softmax_last(x: &Tensor) -> Result<Tensor> {
    let max = x.max_keepdim(D::Minus1)?.detach();
    let e = x.broadcast_sub(&max)?.exp()?;
    let s = e.sum_keepdim(D::Minus1)?;
    Ok(e.broadcast_div(&s)?)
}

pub fn cat_channels(xs: &[&Tensor]) -> Result<Tensor> {
    Ok(Tensor::cat(xs, 1)?)
}

/// Differentiable bilinear resize of an `(N, C, H, W)` tensor.
pub fn resize_bilinear(x: &Tensor, height: usize, width: usize) -> Result<Tensor> {
    let (_, _, h, w) = x.dims4()?;
    if (h, w) == (height, width) {
        return Ok(x.clone());
    }
    let dev = x.device();
    let ry = Tensor::from_vec(interpolation_matrix(height, h), (height, h), dev)?.to_dtype(x.dtype())?;
    let rxt = Tensor::from_vec(interpolation_matrix(width, w), (width, w), dev)?
        .to_dtype(x.dtype())?
        .t()?
        .contiguous()?;
    let x = x.contiguous()?;
    let rows = ry.broadcast_matmul(&x)?;
    Ok(rows.broadcast_matmul(&rxt)?)
}

pub fn check_same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.dims(),
            b.dims()
        )));
    }
    Ok(())
}
