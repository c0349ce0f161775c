//! Structure measure: object-aware plus region-aware similarity.

use super::check_shapes;
use crate::error::Result;
use crate::image_ops::{Mask, SaliencyMap};

/// Weight of the object term.
pub const S_ALPHA: f64 = 0.5;

/// Machine epsilon of `f64`, used as the stabilizer of every ratio.
const EPS: f64 = f64::EPSILON;

/// Structure measure with `alpha = 0.5`, clamped at 0. An all-background
/// mask scores `1 - mean(pred)` and an all-foreground mask `mean(pred)`.
pub fn s_measure(pred: &SaliencyMap, gt: &Mask) -> Result<f64> {
    check_shapes(pred, gt)?;
    let p: Vec<f64> = pred.data.iter().map(|&v| v as f64).collect();
    let g: Vec<bool> = gt.data.iter().map(|&v| v != 0).collect();
    let y = g.iter().filter(|&&v| v).count() as f64 / g.len() as f64;
    let mean_p = p.iter().sum::<f64>() / p.len() as f64;
    if y == 0.0 {
        return Ok(1.0 - mean_p);
    }
    if y == 1.0 {
        return Ok(mean_p);
    }
    let q = S_ALPHA * s_object(&p, &g, y) + (1.0 - S_ALPHA) * s_region(&p, &g, gt.height, gt.width);
    Ok(q.max(0.0))
}

fn s_object(p: &[f64], g: &[bool], u: f64) -> f64 {
    let fg: Vec<f64> = p.iter().zip(g).filter(|(_, &gv)| gv).map(|(&v, _)| v).collect();
    let bg: Vec<f64> = p.iter().zip(g).filter(|(_, &gv)| !gv).map(|(&v, _)| 1.0 - v).collect();
    u * object_score(&fg) + (1.0 - u) * object_score(&bg)
}

fn object_score(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let x = values.iter().sum::<f64>() / n;
    let sigma = if values.len() > 1 {
        (values.iter().map(|v| (v - x).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    2.0 * x / (x * x + 1.0 + sigma + EPS)
}

/// Rounded foreground centroid as 1-based `(column, row)`.
fn centroid(g: &[bool], height: usize, width: usize) -> (usize, usize) {
    let (mut sx, mut sy, mut n) = (0.0f64, 0.0f64, 0.0f64);
    for r in 0..height {
        for c in 0..width {
            if g[r * width + c] {
                sx += (c + 1) as f64;
                sy += (r + 1) as f64;
                n += 1.0;
            }
        }
    }
    ((sx / n).round() as usize, (sy / n).round() as usize)
}

fn s_region(p: &[f64], g: &[bool], height: usize, width: usize) -> f64 {
    let (x, y) = centroid(g, height, width);
    let area = (width * height) as f64;
    let w1 = (x * y) as f64 / area;
    let w2 = ((width - x) * y) as f64 / area;
    let w3 = (x * (height - y)) as f64 / area;
    let w4 = 1.0 - w1 - w2 - w3;
    // Quadrants as half-open (row, col) ranges: the first `y` rows and `x` columns form the top-left block.
    let quads = [
        (0..y, 0..x, w1),
        (0..y, x..width, w2),
        (y..height, 0..x, w3),
        (y..height, x..width, w4),
    ];
    quads
        .into_iter()
        .map(|(rows, cols, w)| {
            let mut pv = Vec::new();
            let mut gv = Vec::new();
            for r in rows {
                for c in cols.clone() {
                    pv.push(p[r * width + c]);
                    gv.push(if g[r * width + c] { 1.0 } else { 0.0 });
                }
            }
            w * region_ssim(&pv, &gv)
        })
        .sum()
}

fn region_ssim(p: &[f64], g: &[f64]) -> f64 {
    if p.is_empty() {
        return 0.0;
    }
    let n = p.len() as f64;
    let x = p.iter().sum::<f64>() / n;
    let y = g.iter().sum::<f64>() / n;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (a, b) in p.iter().zip(g) {
        sxx += (a - x) * (a - x);
        syy += (b - y) * (b - y);
        sxy += (a - x) * (b - y);
    }
    let denom = n - 1.0 + EPS;
    let (sxx, syy, sxy) = (sxx / denom, syy / denom, sxy / denom);
    let alpha = 4.0 * x * y * sxy;
    let beta = (x * x + y * y) * (sxx + syy);
    if alpha != 0.0 {
        alpha / (beta + EPS)
    } else if beta == 0.0 {
        1.0
    } else {
        0.0
    }
}
