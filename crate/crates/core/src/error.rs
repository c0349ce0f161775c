use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A per-frame modality file is absent. The payload names the frame as
    /// `<sequence>/<index>_<modality>`.
    #[error("missing modality file: {0}")]
    MissingModality(String),

    #[error("modality resolution mismatch for {frame}: {detail}")]
    Alignment { frame: String, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("attention level {0} outside the supported range 3..=5")]
    Level(usize),

    #[error("split error: {0}")]
    Split(String),

    #[error("manifest error: {0}")]
    Manifest(String),

    #[error("dataset contains no frame with a non-empty ground-truth mask")]
    EmptyDataset,

    #[error("ground-truth mask is empty")]
    EmptyGroundTruth,

    #[error("unpaired frames: {}", .0.join(", "))]
    Pairing(Vec<String>),

    #[error("value error: {0}")]
    Value(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("training diverged at step {step}: loss is {loss}")]
    TrainingDiverged { step: usize, loss: f64 },

    #[error("attribute error: {0}")]
    Attribute(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error on {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    Tensor(#[from] candle_core::Error),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn image(path: impl Into<PathBuf>, source: image::ImageError) -> Self {
        Error::Image {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the command-line front end.
    ///
    /// 2 covers configuration problems, 3 data problems, 4 numerical divergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Level(_) => 2,
            Error::TrainingDiverged { .. } => 4,
            Error::MissingModality(_)
            | Error::Alignment { .. }
            | Error::Split(_)
            | Error::Manifest(_)
            | Error::EmptyDataset
            | Error::EmptyGroundTruth
            | Error::Pairing(_)
            | Error::Value(_)
            | Error::Input(_)
            | Error::Attribute(_)
            | Error::Io { .. }
            | Error::Image { .. }
            | Error::Checkpoint(_) => 3,
            Error::Shape(_) | Error::Tensor(_) => 1,
        }
    }
}
