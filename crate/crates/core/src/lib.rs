pub mod attention;
pub mod cli;
pub mod data;
pub mod encoder;
pub mod error;
pub mod fusion;
pub mod image_ops;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod plot;

pub use error::{Error, Result};
