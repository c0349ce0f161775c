//! The full network, its loss, training loop, checkpoints and inference.

pub mod checkpoint;
pub mod config;
pub mod loss;
pub mod network;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use config::ModelConfig;
pub use loss::{bce_with_logits, soft_iou_loss, total_loss, weighted_total, LossBreakdown};
pub use network::{ForwardOutput, ModelInputs, Network};
pub use train::{train, Augmentation, TrainConfig, TrainState};

use crate::data::FrameRecord;
use crate::error::Result;
use crate::image_ops::SaliencyMap;

/// Predicts `sigmoid(S_1)` for every frame, each resized back to its frame's
/// resolution. Frames are processed independently in batches of `batch_size`.
pub fn infer(net: &Network, frames: &[FrameRecord], batch_size: usize) -> Result<Vec<SaliencyMap>> {
    let size = net.config.encoder.input_size;
    let mut out = Vec::with_capacity(frames.len());
    for chunk in frames.chunks(batch_size.max(1)) {
        let triples: Vec<_> = chunk.iter().map(|f| (&f.rgb, &f.depth, &f.flow_vis)).collect();
        let inputs = ModelInputs::from_images(&triples, size, net.dtype(), net.device())?;
        let pred = net.forward(&inputs, false)?.prediction()?;
        let pred = pred.to_dtype(candle_core::DType::F32)?;
        for (i, f) in chunk.iter().enumerate() {
            let data: Vec<f32> = pred.get(i)?.flatten_all()?.to_vec1()?;
            let map = SaliencyMap::from_vec(size.0, size.1, data)?;
            let (h, w) = f.resolution();
            out.push(map.resize(h, w));
        }
    }
    Ok(out)
}
