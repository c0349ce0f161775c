//! Plain CPU image containers shared by the data, metrics, and model code.
//!
//! Everything here is row-major with values in `[0, 1]`. Resizing uses
//! half-pixel-centre bilinear interpolation (the `align_corners = false`
//! convention), expressed as a pair of 1-D interpolation matrices so that the
//! same weights drive both CPU resizes and the differentiable tensor resize.

use crate::error::{Error, Result};

/// Row-stochastic weights mapping `input` samples onto `output` samples.
///
/// Returned as a dense `output x input` matrix in row-major order.
pub fn interpolation_matrix(output: usize, input: usize) -> Vec<f64> {
    let mut m = vec![0.0; output * input];
    if output == 0 || input == 0 {
        return m;
    }
    let scale = input as f64 / output as f64;
    for dst in 0..output {
        let src = ((dst as f64 + 0.5) * scale - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(input - 1);
        let i1 = (i0 + 1).min(input - 1);
        let frac = src - i0 as f64;
        m[dst * input + i0] += 1.0 - frac;
        m[dst * input + i1] += frac;
    }
    m
}

/// Single-channel map. Used for depth, saliency predictions and resized masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

/// A prediction or continuous saliency map with values in `[0, 1]`.
pub type SaliencyMap = Plane;

impl Plane {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self::filled(height, width, 0.0)
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            data: vec![value; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "plane of {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }

    pub fn mean(&self) -> f64 {
        if self.data.is_empty() {
            return 0.0;
        }
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    pub fn resize(&self, height: usize, width: usize) -> Plane {
        if (height, width) == (self.height, self.width) {
            return self.clone();
        }
        let data = resize_channel(&self.data, self.height, self.width, height, width);
        Plane {
            height,
            width,
            data,
        }
    }

    pub fn flip_horizontal(&self) -> Plane {
        let mut out = self.clone();
        for row in out.data.chunks_mut(self.width) {
            row.reverse();
        }
        out
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Plane {
        let mut data = Vec::with_capacity(height * width);
        for y in top..top + height {
            data.extend_from_slice(&self.data[y * self.width + left..y * self.width + left + width]);
        }
        Plane {
            height,
            width,
            data,
        }
    }
}

/// Interleaved 3-channel image (`HxWx3`).
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub height: usize,
    pub width: usize,
    pub data: Vec<f32>,
}

impl RgbImage {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0.0; height * width * 3],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != height * width * 3 {
            return Err(Error::Shape(format!(
                "rgb image of {height}x{width} needs {} values, got {}",
                height * width * 3,
                data.len()
            )));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    /// Replicates a single-channel map into all three channels.
    pub fn from_plane(plane: &Plane) -> Self {
        let data = plane.data.iter().flat_map(|&v| [v, v, v]).collect();
        Self {
            height: plane.height,
            width: plane.width,
            data,
        }
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * 3 + c]
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, rgb: [f32; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn channel(&self, c: usize) -> Vec<f32> {
        self.data.iter().skip(c).step_by(3).copied().collect()
    }

    /// Channel-planar (`3xHxW`) copy of the pixel data.
    pub fn to_planar(&self) -> Vec<f32> {
        (0..3).flat_map(|c| self.channel(c)).collect()
    }

    pub fn resize(&self, height: usize, width: usize) -> RgbImage {
        if (height, width) == (self.height, self.width) {
            return self.clone();
        }
        let channels: Vec<Vec<f32>> = (0..3)
            .map(|c| resize_channel(&self.channel(c), self.height, self.width, height, width))
            .collect();
        let mut data = Vec::with_capacity(height * width * 3);
        for i in 0..height * width {
            data.extend(channels.iter().map(|ch| ch[i]));
        }
        RgbImage {
            height,
            width,
            data,
        }
    }

    pub fn flip_horizontal(&self) -> RgbImage {
        let mut out = self.clone();
        for row in out.data.chunks_mut(self.width * 3) {
            let w = self.width;
            for x in 0..w / 2 {
                for c in 0..3 {
                    row.swap(x * 3 + c, (w - 1 - x) * 3 + c);
                }
            }
        }
        out
    }

    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> RgbImage {
        let mut data = Vec::with_capacity(height * width * 3);
        for y in top..top + height {
            let start = (y * self.width + left) * 3;
            data.extend_from_slice(&self.data[start..start + width * 3]);
        }
        RgbImage {
            height,
            width,
            data,
        }
    }
}

/// Binary mask with values in `{0, 1}`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub height: usize,
    pub width: usize,
    pub data: Vec<u8>,
}

impl Mask {
    pub fn zeros(height: usize, width: usize) -> Self {
        Self {
            height,
            width,
            data: vec![0; height * width],
        }
    }

    pub fn from_vec(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::Shape(format!(
                "mask of {height}x{width} needs {} values, got {}",
                height * width,
                data.len()
            )));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::Value("mask values must be 0 or 1".into()));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> u8 {
        self.data[y * self.width + x]
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn to_plane(&self) -> Plane {
        Plane {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| v as f32).collect(),
        }
    }

    /// Thresholds a continuous map: values `>= threshold` become 1.
    pub fn from_plane(plane: &Plane, threshold: f32) -> Mask {
        Mask {
            height: plane.height,
            width: plane.width,
            data: plane.data.iter().map(|&v| (v >= threshold) as u8).collect(),
        }
    }
}

fn resize_channel(src: &[f32], h: usize, w: usize, oh: usize, ow: usize) -> Vec<f32> {
    let ry = interpolation_matrix(oh, h);
    let rx = interpolation_matrix(ow, w);
    // Rows first, then columns.
    let mut tmp = vec![0.0f64; oh * w];
    for oy in 0..oh {
        for iy in 0..h {
            let wgt = ry[oy * h + iy];
            if wgt == 0.0 {
                continue;
            }
            for x in 0..w {
                tmp[oy * w + x] += wgt * src[iy * w + x] as f64;
            }
        }
    }
    let mut out = vec![0.0f32; oh * ow];
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = 0.0;
            for ix in 0..w {
                let wgt = rx[ox * w + ix];
                if wgt != 0.0 {
                    acc += wgt * tmp[oy * w + ix];
                }
            }
            out[oy * ow + ox] = acc as f32;
        }
    }
    out
}
