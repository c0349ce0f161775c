use crate::error::{Error, Result};
use crate::image_ops::SaliencyMap;

/// Sparse gaze points on a frame, in pixel coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationField {
    points: Vec<(f64, f64)>,
    height: usize,
    width: usize,
}

impl FixationField {
    /// Points are `(x, y)` and must lie in `[0, width) x [0, height)`.
    pub fn new(points: Vec<(f64, f64)>, resolution: (usize, usize)) -> Result<Self> {
        let (height, width) = resolution;
        if let Some(p) = points
            .iter()
            .find(|(x, y)| !(0.0..width as f64).contains(x) || !(0.0..height as f64).contains(y))
        {
            return Err(Error::Value(format!(
                "fixation ({}, {}) outside {width}x{height} frame",
                p.0, p.1
            )));
        }
        Ok(Self { points, height, width })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.height, self.width)
    }
}

/// Sums an isotropic Gaussian of width `sigma` at every fixation and scales
/// the result so its peak is 1. No fixations gives an all-zero map.
pub fn fixations_to_saliency(field: &FixationField, sigma: f64) -> Result<SaliencyMap> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::Value(format!("sigma must be positive, got {sigma}")));
    }
    let (h, w) = field.resolution();
    let mut acc = vec![0.0f64; h * w];
    let inv = 1.0 / (2.0 * sigma * sigma);
    for &(px, py) in field.points() {
        for y in 0..h {
            let dy = y as f64 - py;
            for x in 0..w {
                let dx = x as f64 - px;
                acc[y * w + x] += (-(dx * dx + dy * dy) * inv).exp();
            }
        }
    }
    let peak = acc.iter().copied().fold(0.0, f64::max);
    let data = if peak > 0.0 {
        acc.iter().map(|&v| (v / peak) as f32).collect()
    } else {
        vec![0.0; h * w]
    };
    SaliencyMap::from_vec(h, w, data)
}
