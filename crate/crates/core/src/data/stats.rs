//! Dataset-level descriptive statistics: center bias and object placement/size distributions.

use std::fmt::Write as _;
use std::path::Path;

use super::FrameRecord;
use crate::error::{Error, Result};
use crate::image_ops::{Mask, Plane};

/// Side of the square grid every GT mask is resized to before averaging.
pub const CENTER_BIAS_GRID: usize = 256;
pub const HISTOGRAM_BINS: usize = 20;

/// Fixed-width histogram over `[0, 1]`. Values of exactly 1 fall in the last bin.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(bins: usize) -> Self {
        Self { counts: vec![0; bins] }
    }

    pub fn bins(&self) -> usize {
        self.counts.len()
    }

    pub fn bin_of(&self, value: f64) -> usize {
        let b = self.bins();
        ((value.clamp(0.0, 1.0) * b as f64).floor() as usize).min(b - 1)
    }

    pub fn add(&mut self, value: f64) {
        let i = self.bin_of(value);
        self.counts[i] += 1;
    }

    pub fn bin_edges(&self, i: usize) -> (f64, f64) {
        let b = self.bins() as f64;
        (i as f64 / b, (i + 1) as f64 / b)
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

/// Placement and size of one non-empty GT mask.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameGeometry {
    pub label: String,
    /// Centroid in pixel-centre coordinates `(x, y)`.
    pub centroid: (f64, f64),
    /// Centroid-to-centre distance divided by the half diagonal.
    pub center_distance: f64,
    /// Foreground pixels over frame pixels.
    pub size_ratio: f64,
}

/// Returns `None` for an empty mask.
pub fn frame_geometry(label: &str, gt: &Mask) -> Option<FrameGeometry> {
    let n = gt.count();
    if n == 0 {
        return None;
    }
    let (mut sx, mut sy) = (0.0f64, 0.0f64);
    for y in 0..gt.height {
        for x in 0..gt.width {
            if gt.get(y, x) != 0 {
                sx += x as f64 + 0.5;
                sy += y as f64 + 0.5;
            }
        }
    }
    let (w, h) = (gt.width as f64, gt.height as f64);
    let centroid = (sx / n as f64, sy / n as f64);
    let dist = ((centroid.0 - w / 2.0).powi(2) + (centroid.1 - h / 2.0).powi(2)).sqrt();
    let half_diag = (w * w + h * h).sqrt() / 2.0;
    Some(FrameGeometry {
        label: label.to_string(),
        centroid,
        center_distance: dist / half_diag,
        size_ratio: n as f64 / (w * h),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetStatistics {
    /// Mean of all GT masks on a `CENTER_BIAS_GRID` square grid.
    pub center_bias: Plane,
    pub center_distance: Histogram,
    pub size_ratio: Histogram,
    pub frames: usize,
    pub geometry: Vec<FrameGeometry>,
}

impl DatasetStatistics {
    pub fn nonempty_frames(&self) -> usize {
        self.geometry.len()
    }

    /// `(row, col)` of the largest center-bias value, first in row-major order.
    pub fn center_bias_argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (i, &v) in self.center_bias.data.iter().enumerate() {
            if v > self.center_bias.data[best] {
                best = i;
            }
        }
        (best / self.center_bias.width, best % self.center_bias.width)
    }

    pub fn center_bias_csv(&self) -> String {
        let mut s = String::new();
        for y in 0..self.center_bias.height {
            let row = &self.center_bias.data[y * self.center_bias.width..(y + 1) * self.center_bias.width];
            let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            s.push_str(&cells.join(","));
            s.push('\n');
        }
        s
    }

    pub fn histograms_csv(&self) -> String {
        let mut s = String::from("histogram,bin,lower,upper,count\n");
        for (name, h) in [("center_distance", &self.center_distance), ("size_ratio", &self.size_ratio)] {
            for (i, c) in h.counts.iter().enumerate() {
                let (lo, hi) = h.bin_edges(i);
                writeln!(s, "{name},{i},{lo},{hi},{c}").expect("writing to a string");
            }
        }
        s
    }

    pub fn frames_csv(&self) -> String {
        let mut s = String::from("frame,centroid_x,centroid_y,center_distance,size_ratio\n");
        for g in &self.geometry {
            writeln!(
                s,
                "{},{},{},{},{}",
                g.label, g.centroid.0, g.centroid.1, g.center_distance, g.size_ratio
            )
            .expect("writing to a string");
        }
        s
    }

    /// Writes `center_bias.csv`, `histograms.csv` and `frames.csv` into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in [
            ("center_bias.csv", self.center_bias_csv()),
            ("histograms.csv", self.histograms_csv()),
            ("frames.csv", self.frames_csv()),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

pub fn dataset_statistics(records: &[FrameRecord]) -> Result<DatasetStatistics> {
    let g = CENTER_BIAS_GRID;
    let mut acc = vec![0.0f64; g * g];
    let mut center_distance = Histogram::new(HISTOGRAM_BINS);
    let mut size_ratio = Histogram::new(HISTOGRAM_BINS);
    let mut geometry = Vec::new();
    for r in records {
        let resized = r.gt.to_plane().resize(g, g);
        for (a, &v) in acc.iter_mut().zip(&resized.data) {
            *a += v as f64;
        }
        if let Some(geo) = frame_geometry(&r.label(), &r.gt) {
            center_distance.add(geo.center_distance);
            size_ratio.add(geo.size_ratio);
            geometry.push(geo);
        }
    }
    if geometry.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let n = records.len() as f64;
    let center_bias = Plane::from_vec(g, g, acc.iter().map(|&v| (v / n) as f32).collect())?;
    Ok(DatasetStatistics {
        center_bias,
        center_distance,
        size_ratio,
        frames: records.len(),
        geometry,
    })
}
