//! Frame-aligned RGB / depth / flow / ground-truth data.
//!
//! On disk a dataset root holds one directory per sequence:
//!
//! ```text
//! <root>/<seq>/rgb/000000.png     3-channel
//! <root>/<seq>/depth/000000.png   8- or 16-bit grayscale
//! <root>/<seq>/flow/000000.png    rendered flow, 3-channel
//! <root>/<seq>/gt/000000.png      8-bit grayscale mask
//! ```

pub mod attributes;
pub mod fixations;
pub mod fixtures;
pub mod io;
pub mod split;
pub mod stats;

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::{Error, Result};
use crate::image_ops::{Mask, Plane, RgbImage};

pub use attributes::{parse_attributes, Attribute, AttributeRecord};
pub use fixations::{fixations_to_saliency, FixationField};
pub use fixtures::{generate_fixtures, make_fixtures, FixtureConfig, Placement, ShapeKind};
pub use split::{default_split, SplitManifest};
pub use stats::{dataset_statistics, DatasetStatistics, Histogram};

/// GT pixels at or above this 8-bit level are foreground.
pub const GT_THRESHOLD: u8 = 128;

pub const MODALITY_DIRS: [&str; 4] = ["rgb", "depth", "flow", "gt"];

/// One time step of a sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub sequence_id: String,
    pub frame_index: usize,
    pub rgb: RgbImage,
    pub depth: Plane,
    pub flow_vis: RgbImage,
    pub gt: Mask,
}

impl FrameRecord {
    pub fn resolution(&self) -> (usize, usize) {
        self.rgb.resolution()
    }

    /// `<sequence>/<index>` label used in reports and errors.
    pub fn label(&self) -> String {
        format!("{}/{:06}", self.sequence_id, self.frame_index)
    }

    fn check_alignment(&self) -> Result<()> {
        let r = self.rgb.resolution();
        let others = [
            ("depth", self.depth.resolution()),
            ("flow", self.flow_vis.resolution()),
            ("gt", self.gt.resolution()),
        ];
        for (name, res) in others {
            if res != r {
                return Err(Error::Alignment {
                    frame: self.label(),
                    detail: format!("rgb is {}x{} but {name} is {}x{}", r.0, r.1, res.0, res.1),
                });
            }
        }
        Ok(())
    }
}

fn frame_indices(dir: &Path) -> Result<BTreeSet<usize>> {
    let mut out = BTreeSet::new();
    if !dir.is_dir() {
        return Ok(out);
    }
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("png") {
            continue;
        }
        if let Some(idx) = path.file_stem().and_then(|s| s.to_str()).and_then(|s| s.parse().ok()) {
            out.insert(idx);
        }
    }
    Ok(out)
}

/// Loads every frame of one sequence, sorted by frame index.
pub fn load_sequence(root: &Path, sequence_id: &str) -> Result<Vec<FrameRecord>> {
    let seq_dir = root.join(sequence_id);
    if !seq_dir.is_dir() {
        return Err(Error::io(
            &seq_dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "sequence directory not found"),
        ));
    }
    let mut all = BTreeSet::new();
    let mut per_dir = Vec::with_capacity(MODALITY_DIRS.len());
    for name in MODALITY_DIRS {
        let idx = frame_indices(&seq_dir.join(name))?;
        all.extend(idx.iter().copied());
        per_dir.push(idx);
    }
    let mut records = Vec::with_capacity(all.len());
    for &index in &all {
        for (name, present) in MODALITY_DIRS.iter().zip(&per_dir) {
            if !present.contains(&index) {
                return Err(Error::MissingModality(format!("{sequence_id}/{index:06}_{name}")));
            }
        }
        let file = format!("{index:06}.png");
        let record = FrameRecord {
            sequence_id: sequence_id.to_string(),
            frame_index: index,
            rgb: io::read_rgb(&seq_dir.join("rgb").join(&file))?,
            depth: io::read_gray(&seq_dir.join("depth").join(&file))?,
            flow_vis: io::read_rgb(&seq_dir.join("flow").join(&file))?,
            gt: io::read_mask(&seq_dir.join("gt").join(&file))?,
        };
        record.check_alignment()?;
        records.push(record);
    }
    Ok(records)
}

/// Sequence directories under `root` (those with an `rgb/` subdirectory), sorted.
pub fn list_sequences(root: &Path) -> Result<Vec<String>> {
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(root, e))?.path();
        if path.join("rgb").is_dir() {
            if let Some(name) = path.file_name().and_then(|n| n.to_str()) {
                out.push(name.to_string());
            }
        }
    }
    out.sort();
    Ok(out)
}

/// Loads the listed sequences, or every sequence when `sequences` is `None`.
pub fn load_dataset(root: &Path, sequences: Option<&[String]>) -> Result<Vec<FrameRecord>> {
    let owned;
    let seqs = match sequences {
        Some(s) => s,
        None => {
            owned = list_sequences(root)?;
            &owned
        }
    };
    let mut out = Vec::new();
    for s in seqs {
        out.extend(load_sequence(root, s)?);
    }
    Ok(out)
}

/// Writes one frame in the dataset layout. Depth is stored as 16-bit.
pub fn write_frame(root: &Path, record: &FrameRecord) -> Result<()> {
    let seq_dir = root.join(&record.sequence_id);
    let file = format!("{:06}.png", record.frame_index);
    for name in MODALITY_DIRS {
        let d = seq_dir.join(name);
        std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
    }
    io::write_rgb(&seq_dir.join("rgb").join(&file), &record.rgb)?;
    io::write_gray16(&seq_dir.join("depth").join(&file), &record.depth)?;
    io::write_rgb(&seq_dir.join("flow").join(&file), &record.flow_vis)?;
    io::write_mask(&seq_dir.join("gt").join(&file), &record.gt)?;
    Ok(())
}
