//! Prints the per-level feature shapes of each scale preset, both from the
//! shape arithmetic and from an actual forward pass through one stream.

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rgbd_vsod::encoder::{EncoderConfig, EncoderStream, Modality};
use rgbd_vsod::nn::{ParamBuilder, ParamStore};

fn main() -> rgbd_vsod::Result<()> {
    let paper = EncoderConfig::paper();
    println!("paper preset, 448x448 input:");
    for (i, (c, h, w)) in paper.level_shapes(448, 448).iter().enumerate() {
        println!("  level {}: {c} x {h} x {w}", i + 1);
    }

    for config in [EncoderConfig::toy(64), EncoderConfig::micro(16)] {
        let (h, w) = config.input_size;
        let mut store = ParamStore::new(DType::F32, Device::Cpu);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stream = EncoderStream::new(&mut ParamBuilder::new(&mut store, &mut rng), Modality::Rgb, &config)?;
        let image = Tensor::rand(0f32, 1f32, (1, 3, h, w), &Device::Cpu)?;
        let pyramid = stream.encode(&image, false)?;
        println!("{:?} preset, {h}x{w} input, {} weights:", config.scale_preset, store.num_weights());
        for (i, (measured, predicted)) in pyramid.shapes()?.iter().zip(config.level_shapes(h, w)).enumerate() {
            println!("  level {}: measured {measured:?}, predicted {predicted:?}", i + 1);
        }
    }
    Ok(())
}
