//! Minimal raster plots for dataset analysis: a heatmap and bar charts.
//!
//! The plots carry no text. Every plotted number is also written to CSV.

use std::path::Path;

use image::{Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::image_ops::Plane;

const BACKGROUND: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([40, 40, 40]);
const BAR: Rgb<u8> = Rgb([59, 117, 175]);

/// Control points of a perceptually ordered dark-to-bright colormap.
const COLORMAP: [[f32; 3]; 5] = [
    [68.0, 1.0, 84.0],
    [59.0, 82.0, 139.0],
    [33.0, 145.0, 140.0],
    [94.0, 201.0, 98.0],
    [253.0, 231.0, 37.0],
];

pub fn colormap(v: f32) -> Rgb<u8> {
    let v = v.clamp(0.0, 1.0) * (COLORMAP.len() - 1) as f32;
    let i = (v.floor() as usize).min(COLORMAP.len() - 2);
    let t = v - i as f32;
    let (a, b) = (COLORMAP[i], COLORMAP[i + 1]);
    Rgb(std::array::from_fn(|k| (a[k] + (b[k] - a[k]) * t).round() as u8))
}

/// Renders `map` scaled so its maximum is the brightest colour.
pub fn heatmap(map: &Plane) -> RgbImage {
    let max = map.max().max(f32::MIN_POSITIVE);
    RgbImage::from_fn(map.width as u32, map.height as u32, |x, y| {
        colormap(map.get(y as usize, x as usize) / max)
    })
}

/// Bar chart of `values` on a `width x height` canvas with simple axes.
pub fn bar_chart(values: &[f64], width: u32, height: u32) -> RgbImage {
    let mut img = RgbImage::from_pixel(width, height, BACKGROUND);
    let margin = 12u32;
    let (x0, y0) = (margin, height - margin);
    let plot_w = width - 2 * margin;
    let plot_h = height - 2 * margin;
    let max = values.iter().cloned().fold(0.0, f64::max);
    if !values.is_empty() {
        let slot = plot_w as f64 / values.len() as f64;
        for (i, &v) in values.iter().enumerate() {
            let bar_h = if max > 0.0 { (v / max * plot_h as f64).round() as u32 } else { 0 };
            let left = x0 + (i as f64 * slot + slot * 0.1).round() as u32;
            let right = x0 + ((i + 1) as f64 * slot - slot * 0.1).round() as u32;
            for x in left..right.max(left + 1) {
                for y in (y0 - bar_h)..y0 {
                    img.put_pixel(x, y, BAR);
                }
            }
        }
    }
    for x in x0..x0 + plot_w {
        img.put_pixel(x, y0, AXIS);
    }
    for y in margin..=y0 {
        img.put_pixel(x0, y, AXIS);
    }
    img
}

pub fn save(img: &RgbImage, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    img.save(path).map_err(|e| Error::image(path, e))
}
