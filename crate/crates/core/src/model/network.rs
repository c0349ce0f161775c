use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use crate::attention::{mam_enhance_level, MamLevel};
use crate::encoder::{build_three_streams, EncoderSet, FeaturePyramid, Modality, NUM_LEVELS};
use crate::error::{Error, Result};
use crate::fusion::{coarse_map, hmap_refine, rfm_forward, CoarseMapBundle, CoarseMapParameters, Decoder, RfmParameters};
use crate::image_ops::{Plane, RgbImage};
use crate::nn::{resize_bilinear, sigmoid, ParamBuilder, ParamStore};

/// Per-modality input batches, each `(N, C, H, W)` with values in `[0, 1]`.
/// Depth may be single-channel. Inputs for disabled streams are ignored.
#[derive(Debug, Clone, Default)]
pub struct ModelInputs {
    pub rgb: Option<Tensor>,
    pub depth: Option<Tensor>,
    pub flow: Option<Tensor>,
}

impl ModelInputs {
    pub fn new(rgb: Tensor, depth: Tensor, flow: Tensor) -> Self {
        Self {
            rgb: Some(rgb),
            depth: Some(depth),
            flow: Some(flow),
        }
    }

    pub fn get(&self, m: Modality) -> Option<&Tensor> {
        match m {
            Modality::Rgb => self.rgb.as_ref(),
            Modality::Depth => self.depth.as_ref(),
            Modality::Flow => self.flow.as_ref(),
        }
    }

    pub fn set(&mut self, m: Modality, t: Tensor) {
        match m {
            Modality::Rgb => self.rgb = Some(t),
            Modality::Depth => self.depth = Some(t),
            Modality::Flow => self.flow = Some(t),
        }
    }

    /// Stacks frames into a batch, resizing each modality to `size`.
    pub fn from_images(
        frames: &[(&RgbImage, &Plane, &RgbImage)],
        size: (usize, usize),
        dtype: DType,
        device: &Device,
    ) -> Result<Self> {
        let (h, w) = size;
        let n = frames.len();
        let mut rgb = Vec::with_capacity(n * 3 * h * w);
        let mut depth = Vec::with_capacity(n * h * w);
        let mut flow = Vec::with_capacity(n * 3 * h * w);
        for (r, d, f) in frames {
            rgb.extend(r.resize(h, w).to_planar());
            depth.extend(d.resize(h, w).data);
            flow.extend(f.resize(h, w).to_planar());
        }
        let mk = |v: Vec<f32>, c: usize| -> Result<Tensor> {
            Ok(Tensor::from_vec(v, (n, c, h, w), device)?.to_dtype(dtype)?)
        };
        Ok(Self::new(mk(rgb, 3)?, mk(depth, 1)?, mk(flow, 3)?))
    }
}

/// Logits produced by one forward pass, all resized to the input size.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// Per-level saliency logits `S_1..S_5`, each `(N, 1, H, W)`.
    pub logits: Vec<Tensor>,
    /// Coarse-map logit resized to the input size.
    pub coarse_logit: Tensor,
    /// Coarse-map bundle at level-5 resolution.
    pub coarse: CoarseMapBundle,
}

impl ForwardOutput {
    /// Per-level saliency maps in `[0, 1]`.
    pub fn saliency(&self) -> Result<Vec<Tensor>> {
        self.logits.iter().map(sigmoid).collect()
    }

    /// The final prediction, `sigmoid(S_1)`.
    pub fn prediction(&self) -> Result<Tensor> {
        sigmoid(&self.logits[0])
    }

    pub fn coarse_saliency(&self) -> Result<Tensor> {
        sigmoid(&self.coarse_logit)
    }
}

/// The assembled multi-stream network and its parameters.
#[derive(Debug)]
pub struct Network {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoders: EncoderSet,
    pub mam: BTreeMap<usize, MamLevel>,
    pub coarse: CoarseMapParameters,
    pub rfm: Vec<RfmParameters>,
    pub decoder: Decoder,
}

impl Network {
    /// Builds an `f32` CPU network seeded from `config.seed`.
    pub fn new(config: ModelConfig) -> Result<Self> {
        Self::with_dtype(config, DType::F32, Device::Cpu)
    }

    pub fn with_dtype(config: ModelConfig, dtype: DType, device: Device) -> Result<Self> {
        config.validate()?;
        let mut store = ParamStore::new(dtype, device);
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut b = ParamBuilder::new(&mut store, &mut rng);
        let c = config.encoder.common_width;
        let num_aux = config.num_aux();
        let enabled: Vec<Modality> = config.enabled_streams.iter().copied().collect();
        let encoders = build_three_streams(&mut b.pp("encoder"), &config.encoder, &enabled)?;
        let mam = config
            .mam_levels
            .iter()
            .map(|&l| Ok((l, MamLevel::new(&mut b.pp(format!("mam{l}")), c, num_aux)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        let coarse = CoarseMapParameters::new(&mut b.pp("coarse"), c, num_aux, config.fusion_mode)?;
        let rfm = (1..=NUM_LEVELS)
            .map(|l| RfmParameters::new(&mut b.pp(format!("rfm{l}")), c, num_aux, config.fusion_mode))
            .collect::<Result<Vec<_>>>()?;
        let decoder = Decoder::new(&mut b.pp("decoder"), c)?;
        Ok(Self {
            config,
            store,
            encoders,
            mam,
            coarse,
            rfm,
            decoder,
        })
    }

    pub fn dtype(&self) -> DType {
        self.store.dtype()
    }

    pub fn device(&self) -> &Device {
        self.store.device()
    }

    /// Runs the encoders for every enabled stream, main first.
    pub fn encode(&self, inputs: &ModelInputs, train: bool) -> Result<Vec<FeaturePyramid>> {
        let order = self.config.stream_order();
        let mut size = None;
        let mut out = Vec::with_capacity(order.len());
        for m in order {
            let x = inputs
                .get(m)
                .ok_or_else(|| Error::Input(format!("missing input for enabled stream `{m}`")))?;
            let (n, _, h, w) = x.dims4()?;
            match size {
                None => size = Some((n, h, w)),
                Some(s) if s != (n, h, w) => {
                    return Err(Error::Input(format!(
                        "`{m}` input is {n}x{h}x{w}, expected {}x{}x{}",
                        s.0, s.1, s.2
                    )))
                }
                _ => {}
            }
            let stream = self.encoders.stream(m).expect("every enabled stream has an encoder");
            out.push(stream.encode(&x.to_dtype(self.dtype())?, train)?);
        }
        Ok(out)
    }

    pub fn forward(&self, inputs: &ModelInputs, train: bool) -> Result<ForwardOutput> {
        let pyramids = self.encode(inputs, train)?;
        let (_, _, h, w) = inputs
            .get(self.config.main_modality)
            .expect("checked by encode")
            .dims4()?;
        // levels[l][s]: feature of level l+1 for stream s (main first).
        let mut levels: Vec<Vec<Tensor>> = (0..NUM_LEVELS)
            .map(|l| pyramids.iter().map(|p| p.levels[l].clone()).collect())
            .collect();

        for (&level, params) in &self.mam {
            let feats = &levels[level - 1];
            let aux: Vec<&Tensor> = feats[1..].iter().collect();
            let (main, enhanced) = mam_enhance_level(&feats[0], &aux, level, params, train)?;
            levels[level - 1] = std::iter::once(main).chain(enhanced).collect();
        }

        let top: Vec<&Tensor> = levels[NUM_LEVELS - 1].iter().collect();
        let coarse = coarse_map(&top, &self.coarse, train)?;

        for &level in &self.config.hmap_levels {
            levels[level - 1] = levels[level - 1]
                .iter()
                .map(|f| hmap_refine(f, &coarse))
                .collect::<Result<_>>()?;
        }

        let fused = levels
            .iter()
            .zip(&self.rfm)
            .map(|(feats, params)| {
                let aux: Vec<&Tensor> = feats[1..].iter().collect();
                Ok(rfm_forward(&feats[0], &aux, params, train)?.fused)
            })
            .collect::<Result<Vec<_>>>()?;

        let decoded = self.decoder.forward(&fused, (h, w), train)?;
        let coarse_logit = resize_bilinear(&coarse.coarse_map, h, w)?;
        Ok(ForwardOutput {
            logits: decoded.logits,
            coarse_logit,
            coarse,
        })
    }

    /// Number of trainable scalars.
    pub fn num_weights(&self) -> usize {
        self.store.num_weights()
    }
}
