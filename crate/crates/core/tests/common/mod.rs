#![allow(dead_code)]

pub mod criteria;
pub mod oracle;

use candle_core::{DType, Tensor};

pub fn tensor_vec(t: &Tensor) -> Vec<f64> {
    t.to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1().unwrap()
}

/// Brute-force metric definitions, written per pixel and per threshold.
pub mod reference_metrics {
    use rgbd_vsod::image_ops::{Mask, SaliencyMap};

    pub fn mae(p: &SaliencyMap, g: &Mask) -> f64 {
        let mut s = 0.0;
        for y in 0..g.height {
            for x in 0..g.width {
                s += (f64::from(p.get(y, x)) - f64::from(g.get(y, x))).abs();
            }
        }
        s / (g.height * g.width) as f64
    }

    /// For each threshold, binarize the 8-bit prediction and count.
    pub fn f_curve(p: &SaliencyMap, g: &Mask) -> Vec<f64> {
        (0..256)
            .map(|t| {
                let (mut tp, mut fp, mut pos) = (0usize, 0usize, 0usize);
                for (&pv, &gv) in p.data.iter().zip(&g.data) {
                    let level = (f64::from(pv.clamp(0.0, 1.0)) * 255.0).round() as usize;
                    let on = level >= t;
                    pos += usize::from(gv != 0);
                    tp += usize::from(on && gv != 0);
                    fp += usize::from(on && gv == 0);
                }
                if tp == 0 {
                    return 0.0;
                }
                let precision = tp as f64 / (tp + fp) as f64;
                let recall = tp as f64 / pos as f64;
                1.3 * precision * recall / (0.3 * precision + recall)
            })
            .collect()
    }

    const EPS: f64 = f64::EPSILON;

    type Grid = Vec<Vec<f64>>;

    fn grid(h: usize, w: usize, f: impl Fn(usize, usize) -> f64) -> Grid {
        (0..h).map(|y| (0..w).map(|x| f(y, x)).collect()).collect()
    }

    fn flat(g: &Grid) -> Vec<f64> {
        g.iter().flatten().copied().collect()
    }

    fn mean(v: &[f64]) -> f64 {
        v.iter().sum::<f64>() / v.len() as f64
    }

    fn object(values: &[f64]) -> f64 {
        if values.is_empty() {
            return 0.0;
        }
        let x = mean(values);
        let sd = if values.len() < 2 {
            0.0
        } else {
            (values.iter().map(|v| (v - x).powi(2)).sum::<f64>() / (values.len() - 1) as f64).sqrt()
        };
        2.0 * x / (x * x + 1.0 + sd + EPS)
    }

    fn block(g: &Grid, rows: std::ops::Range<usize>, cols: std::ops::Range<usize>) -> Vec<f64> {
        rows.flat_map(|y| cols.clone().map(move |x| g[y][x])).collect()
    }

    fn ssim(p: &[f64], g: &[f64]) -> f64 {
        if p.is_empty() {
            return 0.0;
        }
        let n = p.len() as f64;
        let (x, y) = (mean(p), mean(g));
        let sx = p.iter().map(|v| (v - x).powi(2)).sum::<f64>() / (n - 1.0 + EPS);
        let sy = g.iter().map(|v| (v - y).powi(2)).sum::<f64>() / (n - 1.0 + EPS);
        let sxy = p.iter().zip(g).map(|(a, b)| (a - x) * (b - y)).sum::<f64>() / (n - 1.0 + EPS);
        let alpha = 4.0 * x * y * sxy;
        let beta = (x * x + y * y) * (sx + sy);
        if alpha != 0.0 {
            alpha / (beta + EPS)
        } else if beta == 0.0 {
            1.0
        } else {
            0.0
        }
    }

    pub fn s_measure(p: &SaliencyMap, g: &Mask) -> f64 {
        let (h, w) = (g.height, g.width);
        let pr = grid(h, w, |y, x| f64::from(p.get(y, x)));
        let gt = grid(h, w, |y, x| f64::from(g.get(y, x)));
        let y_mean = mean(&flat(&gt));
        if y_mean == 0.0 {
            return 1.0 - mean(&flat(&pr));
        }
        if y_mean == 1.0 {
            return mean(&flat(&pr));
        }
        // Object term: foreground predictions over foreground pixels,
        // inverted predictions over background pixels.
        let fg: Vec<f64> = flat(&pr).into_iter().zip(flat(&gt)).filter(|(_, g)| *g == 1.0).map(|(p, _)| p).collect();
        let bg: Vec<f64> = flat(&pr).into_iter().zip(flat(&gt)).filter(|(_, g)| *g == 0.0).map(|(p, _)| 1.0 - p).collect();
        let s_obj = y_mean * object(&fg) + (1.0 - y_mean) * object(&bg);

        // Region term around the rounded 1-based centroid.
        let total: f64 = flat(&gt).iter().sum();
        let col_sums: Vec<f64> = (0..w).map(|x| (0..h).map(|y| gt[y][x]).sum()).collect();
        let row_sums: Vec<f64> = (0..h).map(|y| gt[y].iter().sum()).collect();
        let cx = (col_sums.iter().enumerate().map(|(i, s)| (i + 1) as f64 * s).sum::<f64>() / total).round() as usize;
        let cy = (row_sums.iter().enumerate().map(|(j, s)| (j + 1) as f64 * s).sum::<f64>() / total).round() as usize;
        let area = (h * w) as f64;
        let w1 = (cx * cy) as f64 / area;
        let w2 = ((w - cx) * cy) as f64 / area;
        let w3 = (cx * (h - cy)) as f64 / area;
        let w4 = 1.0 - w1 - w2 - w3;
        let s_reg = w1 * ssim(&block(&pr, 0..cy, 0..cx), &block(&gt, 0..cy, 0..cx))
            + w2 * ssim(&block(&pr, 0..cy, cx..w), &block(&gt, 0..cy, cx..w))
            + w3 * ssim(&block(&pr, cy..h, 0..cx), &block(&gt, cy..h, 0..cx))
            + w4 * ssim(&block(&pr, cy..h, cx..w), &block(&gt, cy..h, cx..w));
        (0.5 * s_obj + 0.5 * s_reg).max(0.0)
    }
}
