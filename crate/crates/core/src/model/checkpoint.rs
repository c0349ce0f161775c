//! Weights, model configuration and step counter in one safetensors file.

use std::collections::HashMap;
use std::path::Path;

use candle_core::safetensors::Load;
use candle_core::Tensor;
use safetensors::SafeTensors;

use super::config::ModelConfig;
use super::network::Network;
use crate::error::{Error, Result};

const CONFIG_KEY: &str = "model_config";
const STEP_KEY: &str = "step";

pub fn save_checkpoint(net: &Network, step: usize, path: &Path) -> Result<()> {
    let tensors: Vec<(String, Tensor)> = net
        .store
        .iter()
        .map(|p| (p.name.clone(), p.var.as_tensor().contiguous()))
        .map(|(n, t)| t.map(|t| (n, t)))
        .collect::<candle_core::Result<_>>()?;
    let config = serde_json::to_string(&net.config).expect("model config serializes");
    let metadata = HashMap::from([(CONFIG_KEY.to_string(), config), (STEP_KEY.to_string(), step.to_string())]);
    let bytes = safetensors::serialize(tensors, Some(metadata)).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Rebuilds the network recorded in a checkpoint and returns it with its step.
pub fn load_checkpoint(path: &Path) -> Result<(Network, usize)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (_, meta) = SafeTensors::read_metadata(&bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let meta = meta
        .metadata()
        .clone()
        .ok_or_else(|| Error::Checkpoint("checkpoint has no metadata".into()))?;
    let config: ModelConfig = meta
        .get(CONFIG_KEY)
        .ok_or_else(|| Error::Checkpoint("checkpoint has no model config".into()))
        .and_then(|s| serde_json::from_str(s).map_err(|e| Error::Checkpoint(e.to_string())))?;
    let step = meta
        .get(STEP_KEY)
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Checkpoint("checkpoint has no step".into()))?;
    let net = Network::new(config)?;
    let st = SafeTensors::deserialize(&bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let tensors = st
        .iter()
        .map(|(name, view)| Ok((name.to_string(), view.load(net.device())?)))
        .collect::<Result<HashMap<_, _>>>()?;
    net.store.load_tensors(&tensors)?;
    Ok((net, step))
}
