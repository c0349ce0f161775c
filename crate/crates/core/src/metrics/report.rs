//! Per-frame scoring and dataset aggregation.
//!
//! Aggregates are frame-pooled: the dataset MAE and S-measure are means over
//! all frames, and the dataset F-measure curve is the mean of the per-frame
//! curves over frames with a non-empty mask, maximized after averaging.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::{f_measure_curve, mae, s_measure, F_THRESHOLDS};
use crate::data::attributes::{Attribute, AttributeRecord};
use crate::data::io::{read_gray, read_mask};
use crate::error::{Error, Result};
use crate::image_ops::{Mask, SaliencyMap};

/// How the headline F-measure is reduced from per-frame curves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FMaxMode {
    /// Maximum of the mean curve.
    #[default]
    CurveMean,
    /// Mean of the per-frame maxima. Offered for comparison only.
    PerFrameMax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalOptions {
    pub f_max_mode: FMaxMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameScore {
    pub sequence: String,
    /// `<sequence>/<frame>`.
    pub label: String,
    pub mae: f64,
    pub s_measure: f64,
    /// `None` when the mask is empty.
    pub f_curve: Option<Vec<f64>>,
}

/// The `(F_max, S, MAE)` triple over a set of frames.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub f_max: f64,
    pub s_measure: f64,
    pub mae: f64,
    pub frames: usize,
}

impl Summary {
    fn from_frames(frames: &[&FrameScore], mode: FMaxMode) -> Self {
        let n = frames.len().max(1) as f64;
        let curves: Vec<&Vec<f64>> = frames.iter().filter_map(|f| f.f_curve.as_ref()).collect();
        let f_max = if curves.is_empty() {
            0.0
        } else {
            let k = curves.len() as f64;
            match mode {
                FMaxMode::CurveMean => mean_curve(&curves).into_iter().fold(0.0, f64::max),
                FMaxMode::PerFrameMax => curves.iter().map(|c| c.iter().cloned().fold(0.0, f64::max)).sum::<f64>() / k,
            }
        };
        Summary {
            f_max,
            s_measure: frames.iter().map(|f| f.s_measure).sum::<f64>() / n,
            mae: frames.iter().map(|f| f.mae).sum::<f64>() / n,
            frames: frames.len(),
        }
    }
}

fn mean_curve(curves: &[&Vec<f64>]) -> Vec<f64> {
    let mut acc = vec![0.0; F_THRESHOLDS];
    for c in curves {
        for (a, v) in acc.iter_mut().zip(c.iter()) {
            *a += v;
        }
    }
    let k = curves.len().max(1) as f64;
    acc.iter().map(|a| a / k).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceSummary {
    pub sequence: String,
    #[serde(flatten)]
    pub summary: Summary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub options: EvalOptions,
    pub frames: Vec<FrameScore>,
    pub per_sequence: IndexMap<String, Summary>,
    pub dataset: Summary,
    /// Mean F-measure curve over frames with a non-empty mask.
    pub mean_curve: Vec<f64>,
}

impl EvalReport {
    pub fn from_frames(frames: Vec<FrameScore>, options: EvalOptions) -> Self {
        let mut groups: IndexMap<String, Vec<&FrameScore>> = IndexMap::new();
        for f in &frames {
            groups.entry(f.sequence.clone()).or_default().push(f);
        }
        let per_sequence = groups
            .iter()
            .map(|(k, v)| (k.clone(), Summary::from_frames(v, options.f_max_mode)))
            .collect();
        let all: Vec<&FrameScore> = frames.iter().collect();
        let dataset = Summary::from_frames(&all, options.f_max_mode);
        let curves: Vec<&Vec<f64>> = frames.iter().filter_map(|f| f.f_curve.as_ref()).collect();
        let mean_curve = mean_curve(&curves);
        Self {
            options,
            frames,
            per_sequence,
            dataset,
            mean_curve,
        }
    }

    /// One row per sequence plus a final `ALL` row.
    pub fn sequences_csv(&self) -> String {
        let mut s = String::from("sequence,frames,f_max,s_measure,mae\n");
        let rows = self
            .per_sequence
            .iter()
            .map(|(k, v)| (k.as_str(), v))
            .chain(std::iter::once(("ALL", &self.dataset)));
        for (name, m) in rows {
            writeln!(s, "{name},{},{},{},{}", m.frames, m.f_max, m.s_measure, m.mae).expect("writing to a string");
        }
        s
    }

    pub fn frames_csv(&self) -> String {
        let mut s = String::from("frame,f_max,s_measure,mae\n");
        for f in &self.frames {
            let fmax = f
                .f_curve
                .as_ref()
                .map(|c| c.iter().cloned().fold(0.0, f64::max).to_string())
                .unwrap_or_default();
            writeln!(s, "{},{fmax},{},{}", f.label, f.s_measure, f.mae).expect("writing to a string");
        }
        s
    }

    pub fn curve_csv(&self) -> String {
        let mut s = String::from("threshold,f_measure\n");
        for (t, v) in self.mean_curve.iter().enumerate() {
            writeln!(s, "{t},{v}").expect("writing to a string");
        }
        s
    }

    pub fn summary_json(&self) -> String {
        #[derive(Serialize)]
        struct Out {
            f_max: f64,
            s_measure: f64,
            mae: f64,
            frames: usize,
            f_max_mode: FMaxMode,
            sequences: Vec<SequenceSummary>,
        }
        let out = Out {
            f_max: self.dataset.f_max,
            s_measure: self.dataset.s_measure,
            mae: self.dataset.mae,
            frames: self.dataset.frames,
            f_max_mode: self.options.f_max_mode,
            sequences: self
                .per_sequence
                .iter()
                .map(|(k, v)| SequenceSummary {
                    sequence: k.clone(),
                    summary: *v,
                })
                .collect(),
        };
        let mut s = serde_json::to_string_pretty(&out).expect("summary serializes");
        s.push('\n');
        s
    }

    /// Writes `sequences.csv`, `frames.csv`, `f_curve.csv` and `summary.json`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, text) in [
            ("sequences.csv", self.sequences_csv()),
            ("frames.csv", self.frames_csv()),
            ("f_curve.csv", self.curve_csv()),
            ("summary.json", self.summary_json()),
        ] {
            let p = dir.join(name);
            std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }
}

/// Scores one frame, resizing the prediction to the mask resolution first.
pub fn score_frame(sequence: &str, label: &str, pred: &SaliencyMap, gt: &Mask) -> Result<FrameScore> {
    let (h, w) = gt.resolution();
    let pred = if pred.resolution() == (h, w) {
        pred.clone()
    } else {
        pred.resize(h, w)
    };
    let f_curve = match f_measure_curve(&pred, gt) {
        Ok(c) => Some(c),
        Err(Error::EmptyGroundTruth) => None,
        Err(e) => return Err(e),
    };
    Ok(FrameScore {
        sequence: sequence.to_string(),
        label: label.to_string(),
        mae: mae(&pred, gt)?,
        s_measure: s_measure(&pred, gt)?,
        f_curve,
    })
}

/// Evaluates in-memory `(sequence, label, prediction, mask)` tuples.
pub fn evaluate_maps<'a>(
    items: impl IntoIterator<Item = (&'a str, String, &'a SaliencyMap, &'a Mask)>,
    options: EvalOptions,
) -> Result<EvalReport> {
    let frames = items
        .into_iter()
        .map(|(seq, label, p, g)| score_frame(seq, &label, p, g))
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_frames(frames, options))
}

/// PNG files under `root/<seq>/` (or `root/<seq>/gt/` when present), keyed by `<seq>/<stem>`.
fn collect_frames(root: &Path, prefer_gt_subdir: bool) -> Result<BTreeMap<String, (String, PathBuf)>> {
    let mut out = BTreeMap::new();
    let entries = std::fs::read_dir(root).map_err(|e| Error::io(root, e))?;
    let mut seqs: Vec<PathBuf> = Vec::new();
    for e in entries {
        let p = e.map_err(|e| Error::io(root, e))?.path();
        if p.is_dir() {
            seqs.push(p);
        }
    }
    seqs.sort();
    for seq_dir in seqs {
        let seq = seq_dir.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
        let dir = if prefer_gt_subdir && seq_dir.join("gt").is_dir() {
            seq_dir.join("gt")
        } else {
            seq_dir.clone()
        };
        for e in std::fs::read_dir(&dir).map_err(|e| Error::io(&dir, e))? {
            let p = e.map_err(|e| Error::io(&dir, e))?.path();
            if p.extension().and_then(|x| x.to_str()) != Some("png") {
                continue;
            }
            let stem = p.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
            out.insert(format!("{seq}/{stem}"), (seq.clone(), p));
        }
    }
    Ok(out)
}

/// Evaluates predictions stored as `pred_dir/<seq>/<frame>.png` against
/// masks in `gt_dir/<seq>/gt/<frame>.png` (or `gt_dir/<seq>/<frame>.png`).
pub fn evaluate(pred_dir: &Path, gt_dir: &Path, options: EvalOptions) -> Result<EvalReport> {
    let preds = collect_frames(pred_dir, false)?;
    let gts = collect_frames(gt_dir, true)?;
    let pred_keys: BTreeSet<&String> = preds.keys().collect();
    let gt_keys: BTreeSet<&String> = gts.keys().collect();
    let mut unmatched: Vec<String> = gt_keys
        .difference(&pred_keys)
        .map(|k| format!("{k} (no prediction)"))
        .collect();
    unmatched.extend(pred_keys.difference(&gt_keys).map(|k| format!("{k} (no ground truth)")));
    if !unmatched.is_empty() {
        return Err(Error::Pairing(unmatched));
    }
    if gts.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut frames = Vec::with_capacity(gts.len());
    for (key, (seq, gt_path)) in &gts {
        let gt = read_mask(gt_path)?;
        let pred = read_gray(&preds[key].1)?;
        frames.push(score_frame(seq, key, &pred, &gt)?);
    }
    Ok(EvalReport::from_frames(frames, options))
}

/// Metrics over the frames of every sequence carrying an attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeSummary {
    pub attribute: Attribute,
    pub sequences: usize,
    pub summary: Summary,
}

/// Joins a report with per-sequence attributes. Attributes with no evaluated
/// sequence are left out.
pub fn attribute_breakdown(report: &EvalReport, attributes: &[AttributeRecord]) -> Vec<AttributeSummary> {
    let mut out = Vec::new();
    for attr in Attribute::ALL {
        let seqs: BTreeSet<&str> = attributes
            .iter()
            .filter(|r| r.attributes.contains(&attr) && report.per_sequence.contains_key(&r.sequence_id))
            .map(|r| r.sequence_id.as_str())
            .collect();
        if seqs.is_empty() {
            continue;
        }
        let frames: Vec<&FrameScore> = report.frames.iter().filter(|f| seqs.contains(f.sequence.as_str())).collect();
        out.push(AttributeSummary {
            attribute: attr,
            sequences: seqs.len(),
            summary: Summary::from_frames(&frames, report.options.f_max_mode),
        });
    }
    out
}
