//! Synthetic desk-scale clips: one rigid shape translating over a textured
//! background, with matching depth, rendered flow and exact masks.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use indexmap::IndexMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::split::SplitManifest;
use super::{write_frame, FrameRecord};
use crate::error::{Error, Result};
use crate::image_ops::{Mask, Plane, RgbImage};

/// Smallest side accepted for generated frames.
pub const MIN_FIXTURE_SIDE: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShapeKind {
    Disc,
    Square,
}

/// Where each clip's trajectory sits in the frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Placement {
    /// Start point and direction drawn at random, with the whole path kept inside the frame.
    Random,
    /// Path is centred on the frame centre so its midpoint lands there.
    Centered,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixtureConfig {
    pub clips: usize,
    pub frames_per_clip: usize,
    pub height: usize,
    pub width: usize,
    /// Object displacement in pixels per frame.
    pub speed: f64,
    /// Object radius (or half side for squares) as a fraction of the shorter side.
    pub object_scale: f64,
    /// Shapes cycled over clips.
    pub shapes: Vec<ShapeKind>,
    pub placement: Placement,
    /// Amplitude of the per-pixel background noise.
    pub noise: f64,
    /// The last `test_clips` clips are listed under `[test]` in the split manifest.
    pub test_clips: usize,
}

impl Default for FixtureConfig {
    fn default() -> Self {
        Self {
            clips: 4,
            frames_per_clip: 8,
            height: 64,
            width: 64,
            speed: 2.0,
            object_scale: 0.2,
            shapes: vec![ShapeKind::Disc, ShapeKind::Square],
            placement: Placement::Random,
            noise: 0.04,
            test_clips: 0,
        }
    }
}

impl FixtureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.height < MIN_FIXTURE_SIDE || self.width < MIN_FIXTURE_SIDE {
            return Err(Error::Config(format!(
                "fixture resolution {}x{} is below the {MIN_FIXTURE_SIDE}x{MIN_FIXTURE_SIDE} minimum",
                self.height, self.width
            )));
        }
        if self.clips == 0 || self.frames_per_clip == 0 {
            return Err(Error::Config("fixtures need at least one clip and one frame".into()));
        }
        if self.shapes.is_empty() {
            return Err(Error::Config("fixture shape list is empty".into()));
        }
        if !(self.speed >= 0.0 && self.speed.is_finite()) {
            return Err(Error::Config(format!("fixture speed must be finite and >= 0, got {}", self.speed)));
        }
        if !(self.object_scale > 0.0 && self.object_scale < 0.5) {
            return Err(Error::Config(format!(
                "object_scale must lie in (0, 0.5), got {}",
                self.object_scale
            )));
        }
        if !(0.0..=0.5).contains(&self.noise) {
            return Err(Error::Config(format!("noise must lie in [0, 0.5], got {}", self.noise)));
        }
        if self.test_clips >= self.clips && self.test_clips > 0 {
            return Err(Error::Config(format!(
                "test_clips ({}) must leave at least one training clip out of {}",
                self.test_clips, self.clips
            )));
        }
        let travel = self.speed * (self.frames_per_clip - 1) as f64;
        let radius = self.radius();
        let room = self.height.min(self.width) as f64 - 2.0 * radius - 2.0;
        if travel > room {
            return Err(Error::Config(format!(
                "object travelling {travel:.1}px does not fit inside a {}x{} frame",
                self.height, self.width
            )));
        }
        Ok(())
    }

    pub fn radius(&self) -> f64 {
        self.object_scale * self.height.min(self.width) as f64
    }

    pub fn sequence_name(clip: usize) -> String {
        format!("clip{clip:03}")
    }

    pub fn split_manifest(&self) -> SplitManifest {
        let counts = |range: std::ops::Range<usize>| -> IndexMap<String, usize> {
            range.map(|c| (Self::sequence_name(c), self.frames_per_clip)).collect()
        };
        let n_train = self.clips - self.test_clips;
        SplitManifest {
            canonical: None,
            train: counts(0..n_train),
            test: counts(n_train..self.clips),
        }
    }
}

/// Per-clip random draws.
struct ClipPlan {
    shape: ShapeKind,
    start: (f64, f64),
    velocity: (f64, f64),
    object_rgb: [f64; 3],
    bg_a: [f64; 3],
    bg_b: [f64; 3],
    bg_angle: f64,
    object_depth: f64,
    bg_depth: (f64, f64),
}

fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [rng.random(), rng.random(), rng.random()]
}

fn plan_clip(config: &FixtureConfig, clip: usize, rng: &mut ChaCha8Rng) -> ClipPlan {
    let (h, w) = (config.height as f64, config.width as f64);
    let r = config.radius() + 1.0;
    let angle = rng.random_range(0.0..2.0 * PI);
    let velocity = (config.speed * angle.cos(), config.speed * angle.sin());
    let travel = (
        velocity.0 * (config.frames_per_clip - 1) as f64,
        velocity.1 * (config.frames_per_clip - 1) as f64,
    );
    let start = match config.placement {
        Placement::Centered => (w / 2.0 - travel.0 / 2.0, h / 2.0 - travel.1 / 2.0),
        Placement::Random => {
            // Both endpoints must keep the object at least `r` from every border.
            let axis = |len: f64, d: f64, rng: &mut ChaCha8Rng| {
                let lo = r.max(r - d);
                let hi = (len - r).min(len - r - d);
                if hi > lo {
                    rng.random_range(lo..hi)
                } else {
                    lo
                }
            };
            let x = axis(w, travel.0, rng);
            let y = axis(h, travel.1, rng);
            (x, y)
        }
    };
    let object_rgb = random_color(rng);
    // Background colours are pushed away from the object colour so the object stays visible.
    let contrast = |rng: &mut ChaCha8Rng| -> [f64; 3] {
        let c = random_color(rng);
        std::array::from_fn(|i| c[i] * 0.5 + if object_rgb[i] > 0.5 { 0.0 } else { 0.5 })
    };
    let bg_a = contrast(rng);
    let bg_b = contrast(rng);
    ClipPlan {
        shape: config.shapes[clip % config.shapes.len()],
        start,
        velocity,
        object_rgb,
        bg_a,
        bg_b,
        bg_angle: rng.random_range(0.0..2.0 * PI),
        object_depth: rng.random_range(0.7..0.95),
        bg_depth: (rng.random_range(0.05..0.25), rng.random_range(0.25..0.45)),
    }
}

fn inside(shape: ShapeKind, px: f64, py: f64, cx: f64, cy: f64, r: f64) -> bool {
    let (dx, dy) = (px - cx, py - cy);
    match shape {
        ShapeKind::Disc => dx * dx + dy * dy <= r * r,
        ShapeKind::Square => dx.abs() <= r && dy.abs() <= r,
    }
}

/// HSV to RGB with all components in `[0, 1]`.
fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [f64; 3] {
    let h6 = (h.rem_euclid(1.0)) * 6.0;
    let sector = h6.floor() as i32 % 6;
    let f = h6 - h6.floor();
    let (p, q, t) = (v * (1.0 - s), v * (1.0 - s * f), v * (1.0 - s * (1.0 - f)));
    match sector {
        0 => [v, t, p],
        1 => [q, v, p],
        2 => [p, v, t],
        3 => [p, q, v],
        4 => [t, p, v],
        _ => [v, p, q],
    }
}

/// Colour of a displacement vector: hue from direction, saturation from
/// magnitude relative to `max_speed`. Zero motion renders white.
pub fn flow_color(dx: f64, dy: f64, max_speed: f64) -> [f64; 3] {
    let mag = (dx * dx + dy * dy).sqrt();
    if mag == 0.0 || max_speed <= 0.0 {
        return [1.0, 1.0, 1.0];
    }
    let hue = (dy.atan2(dx) + PI) / (2.0 * PI);
    hsv_to_rgb(hue, (mag / max_speed).min(1.0), 1.0)
}

fn q8(v: f64) -> f32 {
    (v.clamp(0.0, 1.0) * 255.0).round() as f32 / 255.0
}

fn q16(v: f64) -> f32 {
    (v.clamp(0.0, 1.0) * 65535.0).round() as f32 / 65535.0
}

fn render_frame(config: &FixtureConfig, plan: &ClipPlan, clip: usize, t: usize, rng: &mut ChaCha8Rng) -> FrameRecord {
    let (h, w) = (config.height, config.width);
    let r = config.radius();
    let cx = plan.start.0 + plan.velocity.0 * t as f64;
    let cy = plan.start.1 + plan.velocity.1 * t as f64;
    let flow_rgb = flow_color(plan.velocity.0, plan.velocity.1, config.speed.max(1.0));
    let (ca, sa) = (plan.bg_angle.cos(), plan.bg_angle.sin());
    let diag = ((h * h + w * w) as f64).sqrt();

    let mut rgb = RgbImage::zeros(h, w);
    let mut depth = Plane::zeros(h, w);
    let mut flow = RgbImage::zeros(h, w);
    let mut gt = Mask::zeros(h, w);
    for y in 0..h {
        for x in 0..w {
            let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
            let i = y * w + x;
            // Gradient coordinate along the background direction, in [0, 1].
            let g = (((px - w as f64 / 2.0) * ca + (py - h as f64 / 2.0) * sa) / diag + 0.5).clamp(0.0, 1.0);
            let noise: f64 = if config.noise > 0.0 {
                rng.random_range(-config.noise..config.noise)
            } else {
                0.0
            };
            let fg = inside(plan.shape, px, py, cx, cy, r);
            let color: [f64; 3] = if fg {
                plan.object_rgb.map(|c| c + noise * 0.5)
            } else {
                std::array::from_fn(|k| plan.bg_a[k] * (1.0 - g) + plan.bg_b[k] * g + noise)
            };
            rgb.set(y, x, color.map(q8));
            let d = if fg {
                plan.object_depth
            } else {
                plan.bg_depth.0 * (1.0 - g) + plan.bg_depth.1 * g
            };
            depth.set(y, x, q16(d));
            flow.set(y, x, if fg { flow_rgb } else { [1.0; 3] }.map(q8));
            gt.data[i] = fg as u8;
        }
    }
    FrameRecord {
        sequence_id: FixtureConfig::sequence_name(clip),
        frame_index: t,
        rgb,
        depth,
        flow_vis: flow,
        gt,
    }
}

/// Generates the fixture frames in memory, quantized exactly as they are stored on disk.
pub fn generate_fixtures(config: &FixtureConfig, seed: u64) -> Result<Vec<FrameRecord>> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(config.clips * config.frames_per_clip);
    for clip in 0..config.clips {
        let plan = plan_clip(config, clip, &mut rng);
        for t in 0..config.frames_per_clip {
            out.push(render_frame(config, &plan, clip, t, &mut rng));
        }
    }
    Ok(out)
}

/// Record of what [`make_fixtures`] wrote, also saved as `fixtures.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixtureDataset {
    pub root: PathBuf,
    pub seed: u64,
    pub config: FixtureConfig,
    pub sequences: Vec<String>,
}

impl FixtureDataset {
    pub fn split_path(&self) -> PathBuf {
        self.root.join("split.toml")
    }
}

/// Writes a fixture dataset to `root` along with `split.toml` and `fixtures.toml`.
pub fn make_fixtures(config: &FixtureConfig, seed: u64, root: &Path) -> Result<FixtureDataset> {
    let frames = generate_fixtures(config, seed)?;
    std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    for frame in &frames {
        write_frame(root, frame)?;
    }
    let dataset = FixtureDataset {
        root: root.to_path_buf(),
        seed,
        config: config.clone(),
        sequences: (0..config.clips).map(FixtureConfig::sequence_name).collect(),
    };
    let split = dataset.split_path();
    std::fs::write(&split, config.split_manifest().to_toml()).map_err(|e| Error::io(&split, e))?;
    #[derive(Serialize)]
    struct Record<'a> {
        seed: u64,
        config: &'a FixtureConfig,
    }
    let text = toml::to_string(&Record { seed, config }).expect("fixture config serializes");
    let path = root.join("fixtures.toml");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(dataset)
}
