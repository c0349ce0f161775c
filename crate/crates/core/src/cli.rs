//! Command-line front end: fixture generation, training, inference,
//! evaluation and dataset analysis driven by one TOML run configuration.
//!
//! Configuration is resolved in layers. Preset defaults come first, then the
//! file given with `--config`, then `--set key=value` overrides, then the
//! `--seed`, `--output-dir` and `--data-root` flags (the latter also read from
//! `RGBD_VSOD_DATA_ROOT`). The resolved configuration is written to
//! `resolved_config.toml` in the output directory by every command.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{
    self, dataset_statistics, make_fixtures, parse_attributes, Attribute, AttributeRecord, FixtureConfig,
    SplitManifest,
};
use crate::encoder::{EncoderConfig, Modality, ScalePreset};
use crate::error::{Error, Result};
use crate::fusion::FusionMode;
use crate::metrics::{evaluate, EvalOptions, FMaxMode};
use crate::model::{infer, load_checkpoint, save_checkpoint, train, ModelConfig, Network, TrainConfig, TrainState};
use crate::plot;

/// Environment variable overriding the dataset root.
pub const DATA_ROOT_ENV: &str = "RGBD_VSOD_DATA_ROOT";
pub const RESOLVED_CONFIG_FILE: &str = "resolved_config.toml";
pub const CHECKPOINT_FILE: &str = "checkpoint.safetensors";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const PREDICTIONS_DIR: &str = "predictions";

#[derive(Debug, Parser)]
#[command(name = "rgbd-vsod", version, about = "Three-stream RGB-D video salient object detection")]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Seed for fixtures, weight initialization and batch sampling.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Dotted-path override such as `train.steps=50`; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    #[arg(long, global = true, env = DATA_ROOT_ENV)]
    pub data_root: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic moving-object dataset into the output directory.
    MakeFixtures,
    /// Train a model and write a checkpoint plus a JSON-lines loss log.
    Train {
        /// Print the per-level feature shapes and exit without training.
        #[arg(long)]
        dry_run: bool,
    },
    /// Write saliency maps for every frame of the selected sequences.
    Infer {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Score predicted maps against ground truth.
    Eval {
        #[arg(long)]
        pred_dir: Option<PathBuf>,
        #[arg(long)]
        gt_dir: Option<PathBuf>,
    },
    /// Dataset statistics with plots.
    Analyze {
        /// Per-sequence attribute file.
        #[arg(long)]
        attributes: Option<PathBuf>,
    },
}

/// Model options of a run. `input_size` is the square network input side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub preset: ScalePreset,
    pub input_size: usize,
    pub main_modality: Modality,
    pub enabled_streams: BTreeSet<Modality>,
    pub fusion_mode: FusionMode,
    pub mam_levels: BTreeSet<usize>,
    pub hmap_levels: BTreeSet<usize>,
}

impl ModelSection {
    pub fn for_preset(preset: ScalePreset) -> Self {
        let input_size = match preset {
            ScalePreset::Toy => 32,
            ScalePreset::Paper => 448,
            ScalePreset::Micro => 8,
        };
        let base = ModelConfig::toy(32);
        Self {
            preset,
            input_size,
            main_modality: base.main_modality,
            enabled_streams: base.enabled_streams,
            fusion_mode: base.fusion_mode,
            mam_levels: base.mam_levels,
            hmap_levels: base.hmap_levels,
        }
    }

    pub fn model_config(&self, seed: u64) -> ModelConfig {
        let encoder = match self.preset {
            ScalePreset::Toy => EncoderConfig::toy(self.input_size),
            ScalePreset::Paper => EncoderConfig {
                input_size: (self.input_size, self.input_size),
                ..EncoderConfig::paper()
            },
            ScalePreset::Micro => EncoderConfig::micro(self.input_size),
        };
        ModelConfig {
            encoder,
            main_modality: self.main_modality,
            enabled_streams: self.enabled_streams.clone(),
            fusion_mode: self.fusion_mode,
            mam_levels: self.mam_levels.clone(),
            hmap_levels: self.hmap_levels.clone(),
            seed,
        }
    }
}

impl Default for ModelSection {
    fn default() -> Self {
        Self::for_preset(ScalePreset::Toy)
    }
}

/// Which sequences of the split a command operates on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Subset {
    #[default]
    All,
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferSection {
    pub checkpoint: Option<PathBuf>,
    pub batch_size: usize,
    pub subset: Subset,
}

impl Default for InferSection {
    fn default() -> Self {
        Self {
            checkpoint: None,
            batch_size: 4,
            subset: Subset::All,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSection {
    pub pred_dir: Option<PathBuf>,
    pub gt_dir: Option<PathBuf>,
    pub f_max_mode: FMaxMode,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeSection {
    pub attributes: Option<PathBuf>,
}

/// Fully resolved settings of one invocation. `train.seed` always equals
/// `seed` after resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub data_root: Option<PathBuf>,
    /// Split manifest; defaults to `<data_root>/split.toml` when that exists.
    pub split: Option<PathBuf>,
    pub fixtures: FixtureConfig,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub infer: InferSection,
    pub eval: EvalSection,
    pub analyze: AnalyzeSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::for_preset(ScalePreset::Toy)
    }
}

impl RunConfig {
    pub fn for_preset(preset: ScalePreset) -> Self {
        let train = match preset {
            ScalePreset::Paper => TrainConfig::paper(),
            ScalePreset::Toy | ScalePreset::Micro => TrainConfig::toy(),
        };
        Self {
            seed: 0,
            output_dir: PathBuf::from("out"),
            data_root: None,
            split: None,
            fixtures: FixtureConfig::default(),
            model: ModelSection::for_preset(preset),
            train,
            infer: InferSection::default(),
            eval: EvalSection::default(),
            analyze: AnalyzeSection::default(),
        }
    }

    /// Resolves a configuration from optional TOML text and overrides.
    pub fn resolve(text: Option<&str>, overrides: &[String]) -> Result<Self> {
        let mut user = match text {
            Some(t) => {
                // Deserializing the raw text first reports unknown keys and
                // type errors with the line they occur on.
                toml::from_str::<RunConfig>(t).map_err(|e| Error::Config(e.to_string()))?;
                toml::from_str::<toml::Table>(t).map_err(|e| Error::Config(e.to_string()))?
            }
            None => toml::Table::new(),
        };
        for item in overrides {
            apply_override(&mut user, item)?;
        }
        let preset = match user.get("model").and_then(|m| m.get("preset")) {
            Some(v) => ScalePreset::deserialize(v.clone()).map_err(|e| Error::Config(format!("model.preset: {e}")))?,
            None => ScalePreset::Toy,
        };
        let mut merged = toml::Table::try_from(RunConfig::for_preset(preset))
            .map_err(|e| Error::Config(e.to_string()))?;
        merge(&mut merged, user);
        let mut cfg = RunConfig::deserialize(toml::Value::Table(merged)).map_err(|e| Error::Config(e.to_string()))?;
        cfg.train.seed = cfg.seed;
        Ok(cfg)
    }

    /// Checks every section. Shape problems of the configured input size
    /// are reported as configuration errors.
    pub fn validate(&self) -> Result<()> {
        self.model_config().validate().map_err(|e| match e {
            Error::Shape(m) => Error::Config(m),
            other => other,
        })?;
        self.train.validate()?;
        self.fixtures.validate()?;
        if self.infer.batch_size == 0 {
            return Err(Error::Config("infer.batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn model_config(&self) -> ModelConfig {
        self.model.model_config(self.seed)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    fn require_data_root(&self) -> Result<&Path> {
        self.data_root
            .as_deref()
            .ok_or_else(|| Error::Config(format!("no data root: set data_root, --data-root or {DATA_ROOT_ENV}")))
    }

    /// Sequences of `subset`. Without a split manifest every sequence of
    /// the data root belongs to both subsets.
    pub fn sequences(&self, subset: Subset) -> Result<Vec<String>> {
        let root = self.require_data_root()?;
        let split_path = match &self.split {
            Some(p) => Some(p.clone()),
            None => Some(root.join("split.toml")).filter(|p| p.is_file()),
        };
        let manifest = match split_path {
            Some(p) => Some(data::default_split(&p)?),
            None => None,
        };
        Ok(match (manifest, subset) {
            (Some(m), Subset::Train) => m.train_sequences(),
            (Some(m), Subset::Test) => m.test_sequences(),
            (Some(m), Subset::All) => all_sequences(&m),
            (None, _) => data::list_sequences(root)?,
        })
    }
}

fn all_sequences(m: &SplitManifest) -> Vec<String> {
    let mut all = m.train_sequences();
    all.extend(m.test_sequences());
    all
}

/// Sets a dotted `key=value` path in `table`. Values are parsed as TOML and
/// fall back to plain strings.
fn apply_override(table: &mut toml::Table, item: &str) -> Result<()> {
    let (key, raw) = item
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{item}` is not of the form key=value")))?;
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::Config(format!("override `{item}` has an empty key segment")));
    }
    let raw = raw.trim();
    let value = toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let (last, path) = parts.split_last().expect("key has at least one segment");
    let mut cursor = table;
    for part in path {
        let entry = cursor
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cursor = entry
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override `{item}`: `{part}` is not a table")))?;
    }
    cursor.insert(last.to_string(), value);
    Ok(())
}

fn merge(base: &mut toml::Table, over: toml::Table) {
    for (k, v) in over {
        match (base.get_mut(&k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(o)) => merge(b, o),
            (_, v) => {
                base.insert(k, v);
            }
        }
    }
}

/// Level table of the configured encoder: one row per level with the trunk
/// channels, the aligned channels and the spatial size.
pub fn level_shape_table(encoder: &EncoderConfig) -> String {
    let (h, w) = encoder.input_size;
    let mut out = format!("input {h}x{w} ({:?} preset)\n", encoder.scale_preset).to_lowercase();
    out.push_str("level  backbone  aligned  height  width\n");
    for (i, (c, lh, lw)) in encoder.level_shapes(h, w).into_iter().enumerate() {
        let _ = writeln!(out, "{:<5}  {:<8}  {:<7}  {:<6}  {}", i + 1, encoder.base_widths[i], c, lh, lw);
    }
    out
}

/// Parses `std::env::args_os` and runs the selected command.
pub fn run() -> Result<()> {
    run_from(std::env::args_os())
}

/// Runs the command line given by `args` (the first item is the program
/// name). Usage errors exit the process through clap.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::parse_from(args);
    execute(&cli)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let cfg = resolve_cli(cli)?;
    match &cli.command {
        Command::MakeFixtures => cmd_make_fixtures(&cfg),
        Command::Train { dry_run } => cmd_train(&cfg, *dry_run),
        Command::Infer { checkpoint } => cmd_infer(&cfg, checkpoint.as_deref()),
        Command::Eval { pred_dir, gt_dir } => cmd_eval(&cfg, pred_dir.as_deref(), gt_dir.as_deref()),
        Command::Analyze { attributes } => cmd_analyze(&cfg, attributes.as_deref()),
    }
}

fn resolve_cli(cli: &Cli) -> Result<RunConfig> {
    let text = match &cli.config {
        Some(p) => Some(
            fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?,
        ),
        None => None,
    };
    let mut cfg = RunConfig::resolve(text.as_deref(), &cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(dir) = &cli.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(root) = &cli.data_root {
        cfg.data_root = Some(root.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_snapshot(cfg: &RunConfig) -> Result<()> {
    fs::create_dir_all(&cfg.output_dir).map_err(|e| Error::io(&cfg.output_dir, e))?;
    let path = cfg.output_dir.join(RESOLVED_CONFIG_FILE);
    fs::write(&path, cfg.to_toml()?).map_err(|e| Error::io(path, e))
}

pub fn cmd_make_fixtures(cfg: &RunConfig) -> Result<()> {
    let dataset = make_fixtures(&cfg.fixtures, cfg.seed, &cfg.output_dir)?;
    write_snapshot(cfg)?;
    println!(
        "wrote {} fixture sequences to {}",
        dataset.sequences.len(),
        cfg.output_dir.display()
    );
    Ok(())
}

pub fn cmd_train(cfg: &RunConfig, dry_run: bool) -> Result<()> {
    let model = cfg.model_config();
    if dry_run {
        print!("{}", level_shape_table(&model.encoder));
        return write_snapshot(cfg);
    }
    let sequences = cfg.sequences(Subset::Train)?;
    let records = data::load_dataset(cfg.require_data_root()?, Some(&sequences))?;
    log::info!("training on {} frames from {} sequences", records.len(), sequences.len());
    write_snapshot(cfg)?;
    let net = Network::new(model)?;
    let log_path = cfg.output_dir.join(TRAIN_LOG_FILE);
    let file = fs::File::create(&log_path).map_err(|e| Error::io(&log_path, e))?;
    let mut writer = BufWriter::new(file);
    let mut state = TrainState::default();
    let history = train(&net, &records, &cfg.train, &mut state, Some(&mut writer))?;
    writer.flush().map_err(|e| Error::io(&log_path, e))?;
    let ckpt = cfg.output_dir.join(CHECKPOINT_FILE);
    save_checkpoint(&net, state.step, &ckpt)?;
    if let Some(last) = history.last() {
        println!("trained {} steps, final loss {:.4}", state.step, last.total);
    }
    Ok(())
}

pub fn cmd_infer(cfg: &RunConfig, checkpoint: Option<&Path>) -> Result<()> {
    let ckpt = checkpoint
        .map(Path::to_path_buf)
        .or_else(|| cfg.infer.checkpoint.clone())
        .unwrap_or_else(|| cfg.output_dir.join(CHECKPOINT_FILE));
    let (net, _) = load_checkpoint(&ckpt)?;
    let root = cfg.require_data_root()?;
    write_snapshot(cfg)?;
    let out = cfg.output_dir.join(PREDICTIONS_DIR);
    let mut count = 0;
    for seq in cfg.sequences(cfg.infer.subset)? {
        let frames = data::load_sequence(root, &seq)?;
        let maps = infer(&net, &frames, cfg.infer.batch_size)?;
        for (frame, map) in frames.iter().zip(&maps) {
            let path = out.join(&seq).join(format!("{:06}.png", frame.frame_index));
            data::io::write_gray8(&path, map)?;
        }
        count += maps.len();
    }
    println!("wrote {count} saliency maps to {}", out.display());
    Ok(())
}

pub fn cmd_eval(cfg: &RunConfig, pred_dir: Option<&Path>, gt_dir: Option<&Path>) -> Result<()> {
    let pred = pred_dir
        .map(Path::to_path_buf)
        .or_else(|| cfg.eval.pred_dir.clone())
        .unwrap_or_else(|| cfg.output_dir.join(PREDICTIONS_DIR));
    let gt = match gt_dir.map(Path::to_path_buf).or_else(|| cfg.eval.gt_dir.clone()) {
        Some(g) => g,
        None => cfg.require_data_root()?.to_path_buf(),
    };
    let options = EvalOptions {
        f_max_mode: cfg.eval.f_max_mode,
    };
    let report = evaluate(&pred, &gt, options)?;
    write_snapshot(cfg)?;
    report.write(&cfg.output_dir)?;
    let s = &report.dataset;
    println!(
        "frames {}  F_max {:.4}  S {:.4}  MAE {:.4}",
        s.frames, s.f_max, s.s_measure, s.mae
    );
    Ok(())
}

/// CSV of attribute counts: `attribute,description,sequences`.
pub fn attribute_counts_csv(records: &[AttributeRecord]) -> String {
    let mut out = String::from("attribute,description,sequences\n");
    for attr in Attribute::ALL {
        let n = records.iter().filter(|r| r.attributes.contains(&attr)).count();
        let _ = writeln!(out, "{},{},{}", attr.code(), attr.description(), n);
    }
    out
}

pub fn cmd_analyze(cfg: &RunConfig, attributes: Option<&Path>) -> Result<()> {
    let attr_path = attributes.map(Path::to_path_buf).or_else(|| cfg.analyze.attributes.clone());
    // Attribute files are checked before the dataset is read.
    let attrs = match &attr_path {
        Some(p) => Some(parse_attributes(&fs::read_to_string(p).map_err(|e| Error::io(p, e))?)?),
        None => None,
    };
    let root = cfg.require_data_root()?;
    let records = data::load_dataset(root, None)?;
    let stats = dataset_statistics(&records)?;
    write_snapshot(cfg)?;
    let dir = &cfg.output_dir;
    stats.write_csv(dir)?;
    plot::save(&plot::heatmap(&stats.center_bias), &dir.join("center_bias.png"))?;
    let to_f64 = |h: &data::Histogram| h.counts.iter().map(|&c| c as f64).collect::<Vec<_>>();
    plot::save(&plot::bar_chart(&to_f64(&stats.center_distance), 320, 200), &dir.join("center_distance.png"))?;
    plot::save(&plot::bar_chart(&to_f64(&stats.size_ratio), 320, 200), &dir.join("size_ratio.png"))?;
    if let Some(attrs) = attrs {
        let path = dir.join("attributes.csv");
        fs::write(&path, attribute_counts_csv(&attrs)).map_err(|e| Error::io(path, e))?;
        let counts: Vec<f64> = Attribute::ALL
            .iter()
            .map(|a| attrs.iter().filter(|r| r.attributes.contains(a)).count() as f64)
            .collect();
        plot::save(&plot::bar_chart(&counts, 420, 200), &dir.join("attributes.png"))?;
    }
    let (r, c) = stats.center_bias_argmax();
    println!(
        "{} frames ({} with objects), center-bias peak at row {r} col {c}",
        stats.frames,
        stats.nonempty_frames()
    );
    Ok(())
}
