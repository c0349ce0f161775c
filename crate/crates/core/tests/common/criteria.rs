//! One check per acceptance criterion. Each returns a short summary on
//! success and a description of the first violation otherwise. The topical
//! integration tests and the acceptance target both call these.

use std::time::Instant;

use candle_core::{DType, Device, Tensor};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgbd_vsod::attention::{affinity_row_error, mam_enhance_level, mam_forward, CoordinateAttention, MamLevel, MamParameters, SpatialAttention};
use rgbd_vsod::data::{
    dataset_statistics, generate_fixtures, stats::frame_geometry, FixtureConfig, FrameRecord, Histogram,
    Placement, SplitManifest,
};
use rgbd_vsod::encoder::{EncoderConfig, EncoderStream, Modality};
use rgbd_vsod::fusion::{
    coarse_map, hmap_refine, hmap_refine_with_gate, rfm_forward, CoarseMapParameters, Decoder, FusionMode,
    MultiFusion, RfmParameters, Uim,
};
use rgbd_vsod::image_ops::{Mask, SaliencyMap};
use rgbd_vsod::metrics::{self, evaluate_maps, EvalOptions};
use rgbd_vsod::model::{
    bce_with_logits, infer, soft_iou_loss, total_loss, weighted_total, LossBreakdown, ModelConfig, ModelInputs,
    Network, TrainConfig, TrainState,
};
use rgbd_vsod::nn::{ParamBuilder, ParamKind, ParamStore};
use rgbd_vsod::Error;

use super::oracle::{self, Arr};
use super::{reference_metrics as refm, tensor_vec};

pub type Check = Result<String, String>;

/// Builds a module into a fresh f64 store with randomized parameters.
pub fn build<T>(seed: u64, f: impl FnOnce(&mut ParamBuilder) -> rgbd_vsod::Result<T>) -> (ParamStore, T) {
    let mut store = ParamStore::new(DType::F64, Device::Cpu);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let module = f(&mut ParamBuilder::new(&mut store, &mut rng)).expect("module builds");
    oracle::randomize(&store, seed + 1000);
    (store, module)
}

fn within(name: &str, err: f64, tol: f64, log: &mut Vec<String>) -> Result<(), String> {
    log.push(format!("{name} {err:.1e}"));
    if err < tol && err.is_finite() {
        Ok(())
    } else {
        Err(format!("{name}: max abs error {err:e} exceeds {tol:e}"))
    }
}

/// Every block against its loop-based transcription on small tensors,
/// in both batch-statistics and running-statistics mode.
pub fn equation_oracles() -> Check {
    let start = Instant::now();
    let tol = 1e-5;
    let mut log = Vec::new();
    for train in [false, true] {
        let tag = if train { "train" } else { "eval" };
        let (_s, p) = build(1, |b| MamParameters::new(b, 8));
        let (a, x) = (Arr::random(2, 8, 4, 4, 1), Arr::random(2, 8, 4, 4, 2));
        let want = oracle::mam(&p, &a, &x, train);
        let got = mam_forward(&a.tensor(), &x.tensor(), 4, &p, train).map_err(|e| e.to_string())?;
        let aff: Vec<f64> = tensor_vec(&got.affinity);
        let aff_err = want.affinity.concat().iter().zip(&aff).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        within(&format!("mam.affinity[{tag}]"), aff_err, tol, &mut log)?;
        within(&format!("mam.rgb_assisted[{tag}]"), want.rgb_assisted.max_diff(&got.rgb_assisted), tol, &mut log)?;
        within(&format!("mam.aux_enhanced[{tag}]"), want.aux_enhanced.max_diff(&got.aux_enhanced), tol, &mut log)?;

        let (_s, lvl) = build(2, |b| MamLevel::new(b, 6, 2));
        let xs: Vec<Arr> = (0..3).map(|i| Arr::random(1, 6, 3, 4, 10 + i)).collect();
        let (wm, wa) = oracle::mam_level(&lvl, &xs[0], &[&xs[1], &xs[2]], train);
        let (gm, ga) = mam_enhance_level(&xs[0].tensor(), &[&xs[1].tensor(), &xs[2].tensor()], 5, &lvl, train)
            .map_err(|e| e.to_string())?;
        let aux_err = wa.iter().zip(&ga).map(|(w, g)| w.max_diff(g)).fold(0.0, f64::max);
        within(&format!("mam_level[{tag}]"), wm.max_diff(&gm).max(aux_err), tol, &mut log)?;

        let (_s, u) = build(3, |b| Uim::new(b, 4));
        let (a, x) = (Arr::random(1, 4, 3, 3, 3), Arr::random(1, 4, 3, 3, 4));
        let got = u.forward(&a.tensor(), &x.tensor(), train).map_err(|e| e.to_string())?;
        within(&format!("uim[{tag}]"), oracle::uim(&u, &a, &x, train).max_diff(&got), 1e-6, &mut log)?;

        let (_s, eq) = build(4, |b| MultiFusion::new(b, 4, 2, FusionMode::Equal, true));
        let xs: Vec<Arr> = (0..3).map(|i| Arr::random(2, 4, 3, 3, 20 + i)).collect();
        let got = eq
            .forward(&xs[0].tensor(), &[&xs[1].tensor(), &xs[2].tensor()], train)
            .map_err(|e| e.to_string())?;
        let want = oracle::fusion(&eq, &xs[0], &[&xs[1], &xs[2]], train);
        within(&format!("equal_fusion[{tag}]"), want.max_diff(&got), tol, &mut log)?;

        let (_s, ca) = build(5, |b| CoordinateAttention::new(b, 8, 8));
        let x = Arr::random(2, 8, 4, 4, 5);
        let got = ca.forward(&x.tensor(), train).and_then(|a| a.dense()).map_err(|e| e.to_string())?;
        within(&format!("coordinate[{tag}]"), oracle::coordinate(&ca, &x, train).max_diff(&got), 1e-6, &mut log)?;

        for (mode, num_aux, seed) in [
            (FusionMode::Progressive, 2, 6),
            (FusionMode::Equal, 2, 7),
            (FusionMode::Progressive, 1, 8),
        ] {
            let (_s, p) = build(seed, |b| RfmParameters::new(b, 8, num_aux, mode));
            let xs: Vec<Arr> = (0..=num_aux).map(|i| Arr::random(2, 8, 4, 4, 30 + i as u64)).collect();
            let aux_a: Vec<&Arr> = xs[1..].iter().collect();
            let aux_t: Vec<Tensor> = xs[1..].iter().map(Arr::tensor).collect();
            let aux_r: Vec<&Tensor> = aux_t.iter().collect();
            let want = oracle::rfm(&p, &xs[0], &aux_a, train);
            let got = rfm_forward(&xs[0].tensor(), &aux_r, &p, train).map_err(|e| e.to_string())?;
            let stage_err = want
                .c_hat
                .iter()
                .zip(&got.coordinate.refined)
                .chain(want.z.iter().zip(got.post_spatial()))
                .map(|(w, g)| w.max_diff(g))
                .fold(0.0, f64::max);
            let name = format!("rfm[{mode:?},{num_aux}aux,{tag}]").to_lowercase();
            within(&name, want.fused.max_diff(&got.fused).max(stage_err), tol, &mut log)?;
        }

        let (_s, cm) = build(9, |b| CoarseMapParameters::new(b, 8, 2, FusionMode::Progressive));
        let xs: Vec<Arr> = (0..3).map(|i| Arr::random(1, 8, 4, 4, 40 + i)).collect();
        let ts: Vec<Tensor> = xs.iter().map(Arr::tensor).collect();
        let refs: Vec<&Tensor> = ts.iter().collect();
        let want = oracle::coarse(&cm, &[&xs[0], &xs[1], &xs[2]], train);
        let got = coarse_map(&refs, &cm, train).map_err(|e| e.to_string())?;
        let per = want
            .per_stream
            .iter()
            .zip(&got.per_stream_logits)
            .map(|(w, g)| w.max_diff(g))
            .fold(0.0, f64::max);
        within(&format!("coarse_map[{tag}]"), want.coarse.max_diff(&got.coarse_map).max(per), tol, &mut log)?;

        let f = Arr::random(1, 8, 8, 8, 50);
        let got = hmap_refine(&f.tensor(), &got).map_err(|e| e.to_string())?;
        within(&format!("hmap[{tag}]"), oracle::hmap(&f, &want.coarse).max_diff(&got), tol, &mut log)?;

        let (_s, dec) = build(11, |b| Decoder::new(b, 4));
        let sizes = [4, 2, 2, 1, 1];
        let fused: Vec<Arr> = sizes.iter().enumerate().map(|(i, &s)| Arr::random(2, 4, s, s, 60 + i as u64)).collect();
        let want = oracle::decoder(&dec, &fused, (8, 8), train);
        let got = dec
            .forward(&fused.iter().map(Arr::tensor).collect::<Vec<_>>(), (8, 8), train)
            .map_err(|e| e.to_string())?;
        let err = want
            .logits
            .iter()
            .zip(&got.logits)
            .chain(want.features.iter().zip(&got.features))
            .map(|(w, g)| w.max_diff(g))
            .fold(0.0, f64::max);
        within(&format!("decoder[{tag}]"), err, tol, &mut log)?;
    }

    let (_s, sa) = build(12, SpatialAttention::new);
    let x = Arr::random(2, 5, 4, 4, 70);
    let got = sa.forward(&x.tensor()).map_err(|e| e.to_string())?;
    within("spatial", oracle::spatial(&sa, &x).max_diff(&got), 1e-6, &mut log)?;

    // Elementwise gate: exact equality.
    let f = Arr::random(1, 3, 4, 4, 80);
    let gate = Arr::random(1, 1, 4, 4, 81).map(|v| v.abs());
    let got = Arr::from_tensor(&hmap_refine_with_gate(&f.tensor(), &gate.tensor()).map_err(|e| e.to_string())?);
    let want = oracle::add(&oracle::bmul(&f, &gate), &f);
    if got != want {
        return Err("hmap gate: elementwise oracle differs".into());
    }

    let secs = start.elapsed().as_secs_f64();
    if secs >= 30.0 {
        return Err(format!("oracle suite took {secs:.1} s"));
    }
    let worst = log
        .iter()
        .filter_map(|l| l.rsplit(' ').next()?.parse::<f64>().ok())
        .fold(0.0, f64::max);
    Ok(format!("{} comparisons, worst error {worst:.1e}, {secs:.1} s", log.len() + 1))
}

/// Random prediction / mask pair. Predictions mix continuous values with
/// exact 8-bit levels and the extremes; mask density varies per pair.
pub fn random_pair(rng: &mut ChaCha8Rng, h: usize, w: usize) -> (SaliencyMap, Mask) {
    let density = rng.random_range(0.05..0.6);
    let mut g: Vec<u8> = (0..h * w).map(|_| u8::from(rng.random_bool(density))).collect();
    g[rng.random_range(0..h * w)] = 1;
    let p: Vec<f32> = (0..h * w)
        .map(|_| match rng.random_range(0..4) {
            0 => rng.random_range(0..=255u8) as f32 / 255.0,
            1 => *[0.0f32, 1.0].get(rng.random_range(0..2)).unwrap(),
            _ => rng.random::<f32>(),
        })
        .collect();
    (SaliencyMap::from_vec(h, w, p).unwrap(), Mask::from_vec(h, w, g).unwrap())
}

/// Metrics against brute-force implementations, then the perfect-prediction
/// dataset summary.
pub fn metric_oracles() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let (mut mae_err, mut s_err) = (0.0f64, 0.0f64);
    for trial in 0..100 {
        let (p, g) = random_pair(&mut rng, 16, 16);
        let m = metrics::mae(&p, &g).map_err(|e| e.to_string())?;
        mae_err = mae_err.max((m - refm::mae(&p, &g)).abs());
        let curve = metrics::f_measure_curve(&p, &g).map_err(|e| e.to_string())?;
        if curve != refm::f_curve(&p, &g) {
            return Err(format!("trial {trial}: F curve differs from the threshold loop"));
        }
        let s = metrics::s_measure(&p, &g).map_err(|e| e.to_string())?;
        s_err = s_err.max((s - refm::s_measure(&p, &g)).abs());
    }
    if mae_err > 1e-12 {
        return Err(format!("mae error {mae_err:e}"));
    }
    if s_err > 1e-9 {
        return Err(format!("S-measure error {s_err:e}"));
    }
    let masks: Vec<Mask> = (0..6).map(|_| random_pair(&mut rng, 16, 16).1).collect();
    let preds: Vec<SaliencyMap> = masks.iter().map(Mask::to_plane).collect();
    let items = masks
        .iter()
        .zip(&preds)
        .enumerate()
        .map(|(i, (g, p))| (if i < 3 { "a" } else { "b" }, format!("f{i}"), p, g));
    let report = evaluate_maps(items, EvalOptions::default()).map_err(|e| e.to_string())?;
    let d = report.dataset;
    if d.f_max != 1.0 || (d.s_measure - 1.0).abs() > 1e-9 || d.mae != 0.0 {
        return Err(format!("perfect predictions scored ({}, {}, {})", d.f_max, d.s_measure, d.mae));
    }
    Ok(format!(
        "100 pairs: mae err {mae_err:.1e}, F exact, S err {s_err:.1e}; perfect = ({}, {:.12}, {})",
        d.f_max, d.s_measure, d.mae
    ))
}

fn scalar(t: &Tensor) -> f64 {
    t.to_dtype(DType::F64).unwrap().to_scalar::<f64>().unwrap()
}

/// Micro-model loss value at the current weights.
fn micro_loss(net: &Network, inputs: &ModelInputs, gt: &Tensor) -> rgbd_vsod::Result<Tensor> {
    let out = net.forward(inputs, true)?;
    Ok(total_loss(&out, gt)?.0)
}

const GRAD_FLOOR: f64 = 1e-6;

/// Analytic gradients of the total loss against central differences.
pub fn gradient_check() -> Check {
    let start = Instant::now();
    let cfg = ModelConfig::micro(8).with_seed(3);
    let net = Network::with_dtype(cfg, DType::F64, Device::Cpu).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut rand_t = |c: usize| {
        let v: Vec<f64> = (0..2 * c * 64).map(|_| rng.random::<f64>()).collect();
        Tensor::from_vec(v, (2, c, 8, 8), &Device::Cpu).unwrap()
    };
    let inputs = ModelInputs::new(rand_t(3), rand_t(1), rand_t(3));
    let gt_vals: Vec<f64> = (0..128).map(|i| f64::from(u8::from((i % 8) > 2 && (i / 8) % 8 > 3))).collect();
    let gt = Tensor::from_vec(gt_vals, (2, 1, 8, 8), &Device::Cpu).unwrap();

    let loss = micro_loss(&net, &inputs, &gt).map_err(|e| e.to_string())?;
    let grads = loss.backward().map_err(|e| e.to_string())?;
    let weights: Vec<_> = net.store.iter().filter(|p| p.kind == ParamKind::Weight).collect();
    // Deep micro-scale levels are 1x1 spatially, so many entries carry
    // gradients far below what a central difference can resolve. Sample
    // among the entries whose analytic gradient is measurable.
    let mut candidates = Vec::new();
    for (i, p) in weights.iter().enumerate() {
        if let Some(g) = grads.get(p.var.as_tensor()) {
            let g = g.flatten_all().unwrap().to_vec1::<f64>().unwrap();
            candidates.extend(g.iter().enumerate().filter(|(_, v)| v.abs() > GRAD_FLOOR).map(|(k, v)| (i, k, *v)));
        }
    }
    if candidates.len() < 20 {
        return Err(format!("only {} entries with |grad| > {GRAD_FLOOR:e}", candidates.len()));
    }
    let h = 1e-5;
    let mut worst = 0.0f64;
    let mut srng = ChaCha8Rng::seed_from_u64(99);
    let mut tensors = std::collections::BTreeSet::new();
    for &(i, k, analytic) in candidates.choose_multiple(&mut srng, 20) {
        let p = weights[i];
        tensors.insert(p.name.clone());
        let base = p.var.as_tensor().flatten_all().unwrap().to_vec1::<f64>().unwrap();
        let eval_at = |delta: f64| {
            let mut v = base.clone();
            v[k] += delta;
            p.var.set(&Tensor::from_vec(v, p.var.shape(), &Device::Cpu).unwrap()).unwrap();
            scalar(&micro_loss(&net, &inputs, &gt).unwrap())
        };
        let numeric = (eval_at(h) - eval_at(-h)) / (2.0 * h);
        p.var.set(&Tensor::from_vec(base.clone(), p.var.shape(), &Device::Cpu).unwrap()).unwrap();
        let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs());
        if rel >= 1e-3 {
            return Err(format!("{}[{k}]: analytic {analytic:e} vs numeric {numeric:e} (rel {rel:e})", p.name));
        }
        worst = worst.max(rel);
    }
    let secs = start.elapsed().as_secs_f64();
    if secs >= 120.0 {
        return Err(format!("gradient check took {secs:.1} s"));
    }
    Ok(format!(
        "20 entries from {} tensors (of {} with |grad| > {GRAD_FLOOR:e}), worst relative error {worst:.1e}, {secs:.1} s",
        tensors.len(),
        candidates.len()
    ))
}

/// Weighted-total arithmetic and the analytic BCE / IoU cases.
pub fn loss_arithmetic() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        // Dyadic values keep every partial sum exactly representable.
        let v = rng.random_range(0..1 << 20) as f64 / 1024.0;
        let c = rng.random_range(0..1 << 20) as f64 / 1024.0;
        let half = [v / 2.0, v / 2.0, v / 2.0, v / 2.0, v / 2.0, c / 2.0];
        let b = LossBreakdown::from_parts(half, half);
        if b.total != 31.0 / 16.0 * v + c {
            return Err(format!("v={v}, c={c}: total {} != {}", b.total, 31.0 / 16.0 * v + c));
        }
        let per: [f64; 5] = std::array::from_fn(|_| rng.random::<f64>());
        let cc = rng.random::<f64>();
        let direct = per[0] + per[1] / 2.0 + per[2] / 4.0 + per[3] / 8.0 + per[4] / 16.0 + cc;
        if (weighted_total(&per, cc) - direct).abs() > 1e-12 {
            return Err("weighted total disagrees with the direct sum".into());
        }
    }
    let dev = Device::Cpu;
    let logits = Tensor::zeros((2, 1, 5, 5), DType::F64, &dev).unwrap();
    let gt_vals: Vec<f64> = (0..50).map(|i| f64::from(u8::from(i % 3 == 0))).collect();
    let gt = Tensor::from_vec(gt_vals, (2, 1, 5, 5), &dev).unwrap();
    let bce = scalar(&bce_with_logits(&logits, &gt).map_err(|e| e.to_string())?);
    if (bce - std::f64::consts::LN_2).abs() > 1e-9 {
        return Err(format!("uniform-0.5 BCE {bce} != ln 2"));
    }
    let ones = Tensor::ones((1, 1, 2, 2), DType::F64, &dev).unwrap();
    let g2 = Tensor::from_vec(vec![1.0, 0.0, 1.0, 0.0], (1, 1, 2, 2), &dev).unwrap();
    let iou = scalar(&soft_iou_loss(&ones, &g2).map_err(|e| e.to_string())?);
    if (iou - 0.4).abs() > 1e-12 {
        return Err(format!("IoU loss {iou} != 0.4"));
    }
    Ok(format!("total = 31/16 v + c exact on 200 draws; BCE(0.5) = {bce:.12}; IoU example = {iou}"))
}

pub fn overfit_fixtures(seed: u64) -> Vec<FrameRecord> {
    let cfg = FixtureConfig {
        clips: 4,
        frames_per_clip: 4,
        ..FixtureConfig::default()
    };
    generate_fixtures(&cfg, seed).unwrap()
}

pub struct OverfitResult {
    pub f_max: f64,
    pub mae: f64,
    pub secs: f64,
}

/// Trains the toy model on four fixture clips for 300 steps and scores the
/// training frames.
pub fn overfit_run(seed: u64) -> rgbd_vsod::Result<OverfitResult> {
    let start = Instant::now();
    let records = overfit_fixtures(seed);
    let net = Network::new(ModelConfig::toy(32).with_seed(seed))?;
    let cfg = TrainConfig {
        flip: false,
        crop: false,
        ..TrainConfig::toy().with_seed(seed)
    };
    rgbd_vsod::model::train(&net, &records, &cfg, &mut TrainState::default(), None)?;
    let maps = infer(&net, &records, 8)?;
    let items = records
        .iter()
        .zip(&maps)
        .map(|(r, p)| (r.sequence_id.as_str(), r.label(), p, &r.gt));
    let report = evaluate_maps(items, EvalOptions::default())?;
    Ok(OverfitResult {
        f_max: report.dataset.f_max,
        mae: report.dataset.mae,
        secs: start.elapsed().as_secs_f64(),
    })
}

pub fn overfit_sanity() -> Check {
    let mut parts = Vec::new();
    let mut failures = Vec::new();
    for seed in [0, 1, 2] {
        let r = overfit_run(seed).map_err(|e| e.to_string())?;
        parts.push(format!("seed {seed}: F {:.3} MAE {:.4} {:.0} s", r.f_max, r.mae, r.secs));
        if r.f_max < 0.95 || r.mae > 0.05 || r.secs >= 300.0 {
            failures.push(seed);
        }
    }
    if failures.is_empty() {
        Ok(parts.join("; "))
    } else {
        Err(format!("seeds {failures:?} missed the target: {}", parts.join("; ")))
    }
}

/// Expected `(trunk channels, side)` of the paper preset at 448x448.
pub const PAPER_LEVELS: [(usize, usize); 5] = [(64, 224), (64, 112), (128, 56), (256, 28), (512, 14)];

/// Parses the rows of a level-shape table.
pub fn parse_shape_table(text: &str) -> Vec<Vec<usize>> {
    text.lines()
        .filter_map(|l| {
            let nums: Option<Vec<usize>> = l.split_whitespace().map(|t| t.parse().ok()).collect();
            nums.filter(|n| n.len() == 5)
        })
        .collect()
}

/// Dry-run table for 448x448 plus a real paper-width trunk at 64x64 whose
/// feature shapes must follow the same arithmetic.
pub fn shape_contract(dry_run_output: &str) -> Check {
    let rows = parse_shape_table(dry_run_output);
    if rows.len() != 5 {
        return Err(format!("expected 5 level rows, got {}", rows.len()));
    }
    for (i, (row, (c, s))) in rows.iter().zip(PAPER_LEVELS).enumerate() {
        if row != &vec![i + 1, c, 64, s, s] {
            return Err(format!("level {} row {row:?}", i + 1));
        }
    }
    let cfg = EncoderConfig {
        input_size: (64, 64),
        ..EncoderConfig::paper()
    };
    let mut store = ParamStore::new(DType::F32, Device::Cpu);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let stream = EncoderStream::new(&mut ParamBuilder::new(&mut store, &mut rng), Modality::Rgb, &cfg)
        .map_err(|e| e.to_string())?;
    let x = Tensor::zeros((1, 3, 64, 64), DType::F32, &Device::Cpu).unwrap();
    let pyr = stream.encode(&x, false).map_err(|e| e.to_string())?;
    let measured = pyr.shapes().map_err(|e| e.to_string())?;
    if measured != cfg.level_shapes(64, 64).to_vec() {
        return Err(format!("trunk shapes {measured:?} differ from the table arithmetic"));
    }
    Ok("448x448 table matches; paper trunk at 64x64 matches its table".into())
}

fn random_inputs(seed: u64, n: usize, size: usize) -> ModelInputs {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = |c: usize| {
        let v: Vec<f32> = (0..n * c * size * size).map(|_| rng.random()).collect();
        Tensor::from_vec(v, (n, c, size, size), &Device::Cpu).unwrap()
    };
    ModelInputs::new(t(3), t(1), t(3))
}

/// Runs forward, loss, one training step and inference for a variant and
/// checks every shape contract.
pub fn run_variant(cfg: ModelConfig) -> Result<(), String> {
    let size = cfg.encoder.input_size.0;
    let net = Network::new(cfg.clone()).map_err(|e| e.to_string())?;
    let out = net.forward(&random_inputs(1, 2, size), true).map_err(|e| e.to_string())?;
    if out.logits.len() != 5 || out.logits.iter().chain([&out.coarse_logit]).any(|l| l.dims() != [2, 1, size, size]) {
        return Err(format!("{cfg:?}: output shapes broken"));
    }
    let records = overfit_fixtures(3);
    let train_cfg = TrainConfig { steps: 1, ..TrainConfig::toy() };
    let losses = rgbd_vsod::model::train(&net, &records[..4], &train_cfg, &mut TrainState::default(), None)
        .map_err(|e| e.to_string())?;
    if !losses[0].total.is_finite() {
        return Err("non-finite loss".into());
    }
    let maps = infer(&net, &records[..2], 2).map_err(|e| e.to_string())?;
    if maps.iter().any(|m| m.resolution() != records[0].resolution()) {
        return Err("inference resolution broken".into());
    }
    Ok(())
}

pub fn ablation_structure() -> Check {
    let full = Network::new(ModelConfig::toy(32)).map_err(|e| e.to_string())?;
    let a1 = Network::new(ModelConfig::toy(32).without_depth()).map_err(|e| e.to_string())?;
    if a1.num_weights() >= full.num_weights() {
        return Err("A1 is not smaller".into());
    }
    if let Some(p) = a1.store.iter().find(|p| p.name.contains("depth")) {
        return Err(format!("A1 still holds {}", p.name));
    }
    let base = random_inputs(7, 1, 32);
    let reference = tensor_vec(&a1.forward(&base, false).map_err(|e| e.to_string())?.logits[0]);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for trial in 0..20 {
        let mut inputs = base.clone();
        inputs.depth = match trial % 3 {
            0 => None,
            1 => Some(Tensor::full(rng.random::<f32>() * 100.0, (1, 1, 32, 32), &Device::Cpu).unwrap()),
            _ => Some(random_inputs(100 + trial, 1, 32).depth.unwrap()),
        };
        let out = tensor_vec(&a1.forward(&inputs, false).map_err(|e| e.to_string())?.logits[0]);
        if out != reference {
            return Err(format!("A1 output depends on depth (trial {trial})"));
        }
    }
    let mut b1 = ModelConfig::toy(32);
    b1.main_modality = Modality::Depth;
    let mut b2 = ModelConfig::toy(32);
    b2.main_modality = Modality::Flow;
    let mut d5 = ModelConfig::toy(32);
    d5.fusion_mode = FusionMode::Equal;
    for (name, cfg) in [("A1", ModelConfig::toy(32).without_depth()), ("B1", b1), ("B2", b2), ("equal", d5)] {
        run_variant(cfg).map_err(|e| format!("{name}: {e}"))?;
    }
    Ok(format!(
        "A1 {} vs {} weights, depth-blind over 20 perturbations; A1/B1/B2/equal pass forward, loss, step, infer",
        a1.num_weights(),
        full.num_weights()
    ))
}

pub fn invariant_suites() -> Check {
    // Affinity rows over 100 random inputs.
    let (_s, p) = build(21, |b| MamParameters::new(b, 8));
    let mut worst_row = 0.0f64;
    for t in 0..100u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(t);
        let (h, w) = (rng.random_range(1..6), rng.random_range(1..6));
        let scale = 10f64.powi(rng.random_range(-2..3));
        let a = Arr::random(1, 8, h, w, 2 * t).scale(scale);
        let x = Arr::random(1, 8, h, w, 2 * t + 1).scale(scale);
        let out = mam_forward(&a.tensor(), &x.tensor(), 3 + (t as usize % 3), &p, t % 2 == 0)
            .map_err(|e| e.to_string())?;
        worst_row = worst_row.max(affinity_row_error(&out.affinity).map_err(|e| e.to_string())?);
    }
    if worst_row >= 1e-5 {
        return Err(format!("affinity row deviation {worst_row:e}"));
    }

    // Interaction block: shape preservation over random shapes and the
    // identical-input branch identities.
    for t in 0..50u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + t);
        let (c, h, w) = (rng.random_range(1..7), rng.random_range(1..7), rng.random_range(1..7));
        let (_s, u) = build(600 + t, |b| Uim::new(b, c));
        let a = Arr::random(2, c, h, w, t).tensor();
        let b = Arr::random(2, c, h, w, t + 1).tensor();
        if u.forward(&a, &b, true).map_err(|e| e.to_string())?.dims() != a.dims() {
            return Err(format!("uim changed shape for ({c},{h},{w})"));
        }
        let br = u.branches(&a, &a, false).map_err(|e| e.to_string())?;
        if tensor_vec(&br.v_sub).iter().any(|&v| v != 0.0)
            || tensor_vec(&br.v_max) != tensor_vec(&a)
            || tensor_vec(&br.v_mul) != tensor_vec(&(&a * &a).unwrap())
        {
            return Err("uim branch identities violated".into());
        }
    }

    // Gate refinement is linear in the feature.
    let mut rng = ChaCha8Rng::seed_from_u64(900);
    for t in 0..100u64 {
        let f = Arr::random(1, 4, 5, 5, 1000 + t);
        let gate = Arr::random(1, 1, 5, 5, 2000 + t).map(|v| v.abs());
        let alpha: f64 = rng.random_range(-4.0..4.0);
        let lhs = tensor_vec(&hmap_refine_with_gate(&f.scale(alpha).tensor(), &gate.tensor()).unwrap());
        let rhs: Vec<f64> = tensor_vec(&hmap_refine_with_gate(&f.tensor(), &gate.tensor()).unwrap())
            .iter()
            .map(|v| v * alpha)
            .collect();
        let err = lhs.iter().zip(&rhs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        if err > 1e-12 {
            return Err(format!("hmap linearity error {err:e} at alpha {alpha}"));
        }
        let pow2 = 2f64.powi(rng.random_range(-3..4));
        let lhs = tensor_vec(&hmap_refine_with_gate(&f.scale(pow2).tensor(), &gate.tensor()).unwrap());
        let base = tensor_vec(&hmap_refine_with_gate(&f.tensor(), &gate.tensor()).unwrap());
        if lhs.iter().zip(&base).any(|(a, b)| *a != b * pow2) {
            return Err(format!("hmap not exactly linear for alpha {pow2}"));
        }
    }

    // Decoder finiteness over 1000 random pyramids.
    let (_s, dec) = build(31, |b| Decoder::new(b, 4));
    for t in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(10_000 + t);
        let base = rng.random_range(1..5);
        let scale = 10f64.powi(rng.random_range(-3..4));
        let sizes = [8 * base, 4 * base, 2 * base, base, base];
        let fused: Vec<Tensor> = sizes
            .iter()
            .enumerate()
            .map(|(i, &s)| Arr::random(1, 4, s, s, t * 7 + i as u64).scale(scale).tensor())
            .collect();
        let out = dec.forward(&fused, (16, 16), t % 2 == 0).map_err(|e| e.to_string())?;
        if out.logits.iter().any(|l| tensor_vec(l).iter().any(|v| !v.is_finite())) {
            return Err(format!("non-finite decoder output at trial {t}"));
        }
    }
    Ok(format!(
        "affinity rows dev {worst_row:.1e} (100 inputs); uim 50 shapes; hmap linear 100 draws; decoder finite 1000 trials"
    ))
}

/// A manifest meeting the published per-split totals.
pub fn canonical_manifest() -> SplitManifest {
    let mut m = SplitManifest { canonical: Some("rdvs".into()), ..Default::default() };
    let spread = |n: usize, total: usize, prefix: &'static str| {
        (0..n).map(move |i| (format!("{prefix}{i:02}"), total / n + usize::from(i < total % n)))
    };
    m.train.extend(spread(32, 2208, "tr"));
    m.test.extend(spread(27, 1879, "te"));
    m
}

pub fn dataset_tooling() -> Check {
    let m = canonical_manifest();
    m.validate().map_err(|e| format!("canonical manifest rejected: {e}"))?;
    if m.train_totals() != (32, 2208) || m.test_totals() != (27, 1879) {
        return Err("canonical totals".into());
    }
    let mut broken = Vec::new();
    let mut a = m.clone();
    *a.train.values_mut().next().unwrap() += 1;
    broken.push(("train frames +1", a));
    let mut b = m.clone();
    b.test.pop();
    broken.push(("one test sequence fewer", b));
    let mut c = m.clone();
    let k = c.train.keys().next().unwrap().clone();
    c.test.insert(k, 1);
    broken.push(("overlap", c));
    for (what, bad) in broken {
        match bad.validate() {
            Err(Error::Manifest(_)) | Err(Error::Split(_)) => {}
            other => return Err(format!("{what}: validation returned {other:?}")),
        }
    }

    let cfg = FixtureConfig { clips: 3, frames_per_clip: 5, ..FixtureConfig::default() };
    let records = generate_fixtures(&cfg, 11).map_err(|e| e.to_string())?;
    let stats = dataset_statistics(&records).map_err(|e| e.to_string())?;
    let mut cd = Histogram::new(rgbd_vsod::data::stats::HISTOGRAM_BINS);
    let mut sr = Histogram::new(rgbd_vsod::data::stats::HISTOGRAM_BINS);
    let mut geo = Vec::new();
    for r in &records {
        let (h, w) = r.resolution();
        let on: Vec<(usize, usize)> = (0..h).flat_map(|y| (0..w).map(move |x| (y, x))).filter(|&(y, x)| r.gt.get(y, x) != 0).collect();
        if on.is_empty() {
            continue;
        }
        let n = on.len() as f64;
        let cx = on.iter().map(|&(_, x)| x as f64 + 0.5).sum::<f64>() / n;
        let cy = on.iter().map(|&(y, _)| y as f64 + 0.5).sum::<f64>() / n;
        let dist = ((cx - w as f64 / 2.0).powi(2) + (cy - h as f64 / 2.0).powi(2)).sqrt()
            / ((w * w + h * h) as f64).sqrt()
            * 2.0;
        let size = n / (w * h) as f64;
        cd.add(dist);
        sr.add(size);
        geo.push((r.label(), (cx, cy), dist, size));
    }
    if stats.geometry.len() != geo.len() {
        return Err("non-empty frame count differs".into());
    }
    for (s, (label, c, d, z)) in stats.geometry.iter().zip(&geo) {
        if &s.label != label || s.centroid != *c || (s.center_distance - d).abs() > 1e-15 || s.size_ratio != *z {
            return Err(format!("{label}: geometry differs from the per-frame oracle"));
        }
        let lib = frame_geometry(label, &records.iter().find(|r| &r.label() == label).unwrap().gt).unwrap();
        if lib != *s {
            return Err(format!("{label}: frame_geometry disagrees with dataset_statistics"));
        }
    }
    if stats.center_distance != cd || stats.size_ratio != sr {
        return Err("histogram counts differ".into());
    }
    let g = rgbd_vsod::data::stats::CENTER_BIAS_GRID;
    let mut acc = vec![0.0f64; g * g];
    for r in &records {
        let (h, w) = r.resolution();
        let m = Arr { n: 1, c: 1, h, w, v: r.gt.data.iter().map(|&v| f64::from(v)).collect() };
        for (a, v) in acc.iter_mut().zip(oracle::resize(&m, g, g).v) {
            *a += v;
        }
    }
    let bias_err = acc
        .iter()
        .zip(&stats.center_bias.data)
        .map(|(a, &b)| (a / records.len() as f64 - f64::from(b)).abs())
        .fold(0.0, f64::max);
    if bias_err > 1e-6 {
        return Err(format!("center-bias map error {bias_err:e}"));
    }

    let centered = FixtureConfig { clips: 2, frames_per_clip: 1, speed: 0.0, placement: Placement::Centered, ..FixtureConfig::default() };
    let st = dataset_statistics(&generate_fixtures(&centered, 4).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (r, c) = st.center_bias_argmax();
    let peak = st.center_bias.get(r, c);
    let mid = g / 2;
    let centre_max = [(mid - 1, mid - 1), (mid - 1, mid), (mid, mid - 1), (mid, mid)]
        .iter()
        .map(|&(y, x)| st.center_bias.get(y, x))
        .fold(0.0f32, f32::max);
    if centre_max != peak {
        return Err(format!("centered fixtures peak at ({r}, {c}), not at the centre"));
    }
    Ok(format!(
        "canonical 32/2208 + 27/1879 accepted, 3 corruptions rejected; {} frames match per-frame oracle; bias err {bias_err:.1e}",
        records.len()
    ))
}
