//! Runs the attention and fusion blocks on their own: cross-modal
//! non-local attention, coordinate and spatial attention, and the
//! interaction block that merges two modalities.

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rgbd_vsod::attention::{affinity_row_error, mam_forward, CoordinateAttention, MamParameters, SpatialAttention};
use rgbd_vsod::fusion::{uim, Uim};
use rgbd_vsod::nn::{ParamBuilder, ParamStore};

fn main() -> rgbd_vsod::Result<()> {
    let dev = Device::Cpu;
    let mut store = ParamStore::new(DType::F32, dev.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut b = ParamBuilder::new(&mut store, &mut rng);
    let mam = MamParameters::new(&mut b.pp("mam"), 16)?;
    let coord = CoordinateAttention::new(&mut b.pp("coord"), 16, 4)?;
    let spatial = SpatialAttention::new(&mut b.pp("spatial"))?;
    let interact = Uim::new(&mut b.pp("uim"), 16)?;

    let rgb = Tensor::randn(0f32, 1f32, (1, 16, 6, 6), &dev)?;
    let depth = Tensor::randn(0f32, 1f32, (1, 16, 6, 6), &dev)?;

    let out = mam_forward(&rgb, &depth, 4, &mam, false)?;
    println!("affinity {:?}, worst row-sum deviation {:.1e}", out.affinity.dims(), affinity_row_error(&out.affinity)?);
    println!("rgb_assisted {:?}, aux_enhanced {:?}", out.rgb_assisted.dims(), out.aux_enhanced.dims());

    let axes = coord.forward(&out.aux_enhanced, false)?;
    let attended = axes.apply(&out.aux_enhanced)?;
    let map = spatial.forward(&attended)?;
    let gated = attended.broadcast_mul(&map)?;
    println!("coordinate-attended {:?}, spatial map {:?}", attended.dims(), map.dims());

    let fused = uim(&rgb, &gated, &interact, false)?;
    println!("fused {:?}, mean {:.4}", fused.dims(), fused.mean_all()?.to_scalar::<f32>()?);
    Ok(())
}
