//! Loop-based f64 reference implementations. Weights are read out of the
//! library's parameter objects; every arithmetic step is written out here
//! independently of the tensor code under test.

use candle_core::{DType, Device, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rgbd_vsod::attention::{CoordinateAttention, MamLevel, MamParameters, SpatialAttention};
use rgbd_vsod::fusion::{CoarseMapParameters, Decoder, EqualUim, Merge, MultiFusion, RfmParameters, Uim};
use rgbd_vsod::nn::{BConv, BatchNorm, Conv2d, ParamStore};

/// Dense `(N, C, H, W)` array.
#[derive(Debug, Clone, PartialEq)]
pub struct Arr {
    pub n: usize,
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub v: Vec<f64>,
}

impl Arr {
    pub fn zeros(n: usize, c: usize, h: usize, w: usize) -> Self {
        Self { n, c, h, w, v: vec![0.0; n * c * h * w] }
    }

    pub fn random(n: usize, c: usize, h: usize, w: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = (0..n * c * h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
        Self { n, c, h, w, v }
    }

    pub fn from_tensor(t: &Tensor) -> Self {
        let (n, c, h, w) = t.dims4().expect("rank-4 tensor");
        let v = t.to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1().unwrap();
        Self { n, c, h, w, v }
    }

    pub fn tensor(&self) -> Tensor {
        Tensor::from_vec(self.v.clone(), (self.n, self.c, self.h, self.w), &Device::Cpu).unwrap()
    }

    pub fn idx(&self, n: usize, c: usize, y: usize, x: usize) -> usize {
        ((n * self.c + c) * self.h + y) * self.w + x
    }

    pub fn at(&self, n: usize, c: usize, y: usize, x: usize) -> f64 {
        self.v[self.idx(n, c, y, x)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self { v: self.v.iter().map(|&a| f(a)).collect(), ..self.clone() }
    }

    pub fn zip(&self, o: &Arr, f: impl Fn(f64, f64) -> f64) -> Self {
        assert_eq!((self.n, self.c, self.h, self.w), (o.n, o.c, o.h, o.w));
        Self { v: self.v.iter().zip(&o.v).map(|(&a, &b)| f(a, b)).collect(), ..self.clone() }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|a| a * s)
    }

    /// Largest absolute difference to `t`, which must share the shape.
    pub fn max_diff(&self, t: &Tensor) -> f64 {
        let o = Arr::from_tensor(t);
        assert_eq!((self.n, self.c, self.h, self.w), (o.n, o.c, o.h, o.w), "oracle shape differs");
        self.v.iter().zip(&o.v).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

pub fn add(a: &Arr, b: &Arr) -> Arr {
    a.zip(b, |x, y| x + y)
}

pub fn mul(a: &Arr, b: &Arr) -> Arr {
    a.zip(b, |x, y| x * y)
}

/// `x * g` where `g` has one channel or as many channels as `x`.
pub fn bmul(x: &Arr, g: &Arr) -> Arr {
    let mut out = x.clone();
    for n in 0..x.n {
        for c in 0..x.c {
            let gc = if g.c == 1 { 0 } else { c };
            for y in 0..x.h {
                for xx in 0..x.w {
                    let i = x.idx(n, c, y, xx);
                    out.v[i] = x.v[i] * g.at(n, gc, y, xx);
                }
            }
        }
    }
    out
}

pub fn cat(parts: &[&Arr]) -> Arr {
    let (n, h, w) = (parts[0].n, parts[0].h, parts[0].w);
    let c: usize = parts.iter().map(|p| p.c).sum();
    let mut out = Arr::zeros(n, c, h, w);
    for b in 0..n {
        let mut base = 0;
        for p in parts {
            for ch in 0..p.c {
                for y in 0..h {
                    for x in 0..w {
                        let i = out.idx(b, base + ch, y, x);
                        out.v[i] = p.at(b, ch, y, x);
                    }
                }
            }
            base += p.c;
        }
    }
    out
}

pub fn relu(a: &Arr) -> Arr {
    a.map(|x| x.max(0.0))
}

pub fn sigmoid(a: &Arr) -> Arr {
    a.map(|x| 1.0 / (1.0 + (-x).exp()))
}

pub fn hswish(a: &Arr) -> Arr {
    a.map(|x| x * (x + 3.0).clamp(0.0, 6.0) / 6.0)
}

pub fn var(v: &Var) -> Vec<f64> {
    v.as_tensor().to_dtype(DType::F64).unwrap().flatten_all().unwrap().to_vec1().unwrap()
}

/// Direct convolution with zero padding.
pub fn conv(x: &Arr, weight: &Arr, bias: Option<&[f64]>, stride: usize, pad: usize) -> Arr {
    let (o, k) = (weight.n, weight.h);
    assert_eq!(weight.c, x.c, "conv input channels");
    let oh = (x.h + 2 * pad - k) / stride + 1;
    let ow = (x.w + 2 * pad - k) / stride + 1;
    let mut out = Arr::zeros(x.n, o, oh, ow);
    for b in 0..x.n {
        for oc in 0..o {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut s = bias.map_or(0.0, |bb| bb[oc]);
                    for ic in 0..x.c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (y * stride + ky) as isize - pad as isize;
                                let ix = (xx * stride + kx) as isize - pad as isize;
                                if iy < 0 || ix < 0 || iy >= x.h as isize || ix >= x.w as isize {
                                    continue;
                                }
                                s += weight.at(oc, ic, ky, kx) * x.at(b, ic, iy as usize, ix as usize);
                            }
                        }
                    }
                    let i = out.idx(b, oc, y, xx);
                    out.v[i] = s;
                }
            }
        }
    }
    out
}

pub fn conv_of(layer: &Conv2d, x: &Arr) -> Arr {
    let w = Arr::from_tensor(layer.weight.as_tensor());
    let bias = layer.bias.as_ref().map(var);
    conv(x, &w, bias.as_deref(), layer.spec.stride, layer.spec.padding)
}

/// Batch normalization. Training mode uses the biased batch variance over
/// `(N, H, W)`; evaluation mode the running statistics.
pub fn bn_of(layer: &BatchNorm, x: &Arr, train: bool) -> Arr {
    let (gamma, beta) = (var(&layer.weight), var(&layer.bias));
    let (rm, rv) = (var(&layer.running_mean), var(&layer.running_var));
    let mut out = x.clone();
    let count = (x.n * x.h * x.w) as f64;
    for c in 0..x.c {
        let vals: Vec<f64> = (0..x.n)
            .flat_map(|b| (0..x.h).flat_map(move |y| (0..x.w).map(move |xx| (b, y, xx))))
            .map(|(b, y, xx)| x.at(b, c, y, xx))
            .collect();
        let (mean, variance) = if train {
            let m = vals.iter().sum::<f64>() / count;
            (m, vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / count)
        } else {
            (rm[c], rv[c])
        };
        let denom = (variance + layer.eps).sqrt();
        for b in 0..x.n {
            for y in 0..x.h {
                for xx in 0..x.w {
                    let i = x.idx(b, c, y, xx);
                    out.v[i] = (x.v[i] - mean) / denom * gamma[c] + beta[c];
                }
            }
        }
    }
    out
}

pub fn bconv_of(block: &BConv, x: &Arr, train: bool) -> Arr {
    relu(&bn_of(&block.bn, &conv_of(&block.conv, x), train))
}

/// Bilinear resize with half-pixel centres, computed pixel by pixel.
pub fn resize(x: &Arr, oh: usize, ow: usize) -> Arr {
    let mut out = Arr::zeros(x.n, x.c, oh, ow);
    let coord = |dst: usize, out_len: usize, in_len: usize| -> (usize, usize, f64) {
        let src = ((dst as f64 + 0.5) * in_len as f64 / out_len as f64 - 0.5).max(0.0);
        let lo = (src.floor() as usize).min(in_len - 1);
        let hi = if lo + 1 < in_len { lo + 1 } else { lo };
        (lo, hi, src - lo as f64)
    };
    for b in 0..x.n {
        for c in 0..x.c {
            for y in 0..oh {
                let (y0, y1, fy) = coord(y, oh, x.h);
                for xx in 0..ow {
                    let (x0, x1, fx) = coord(xx, ow, x.w);
                    let top = x.at(b, c, y0, x0) * (1.0 - fx) + x.at(b, c, y0, x1) * fx;
                    let bottom = x.at(b, c, y1, x0) * (1.0 - fx) + x.at(b, c, y1, x1) * fx;
                    let i = out.idx(b, c, y, xx);
                    out.v[i] = top * (1.0 - fy) + bottom * fy;
                }
            }
        }
    }
    out
}

fn merge_of(m: &Merge, x: &Arr, train: bool) -> Arr {
    match m {
        Merge::Activated(b) => bconv_of(b, x, train),
        Merge::Linear(c) => conv_of(c, x),
    }
}

/// Interaction of two features: aligned concatenation, product, maximum
/// and difference, merged by a 3x3 block.
pub fn uim(p: &Uim, a: &Arr, b: &Arr, train: bool) -> Arr {
    let v_cat = bconv_of(&p.align, &cat(&[a, b]), train);
    let v_mul = mul(a, b);
    let v_max = a.zip(b, f64::max);
    let v_sub = a.zip(b, |x, y| x - y);
    merge_of(&p.merge, &cat(&[&v_cat, &v_mul, &v_max, &v_sub]), train)
}

pub fn equal_uim(p: &EqualUim, a: &Arr, b: &Arr, c: &Arr, train: bool) -> Arr {
    let v_cat = bconv_of(&p.align, &cat(&[a, b, c]), train);
    let v_mul = mul(&mul(a, b), c);
    let v_max = a.zip(b, f64::max).zip(c, f64::max);
    let d = |x: &Arr, y: &Arr| x.zip(y, |p, q| p - q);
    merge_of(
        &p.merge,
        &cat(&[&v_cat, &v_mul, &v_max, &d(a, b), &d(a, c), &d(b, c)]),
        train,
    )
}

pub fn fusion(p: &MultiFusion, main: &Arr, aux: &[&Arr], train: bool) -> Arr {
    match (p, aux) {
        (MultiFusion::Pair(u), [a]) => uim(u, main, a, train),
        (MultiFusion::Progressive { aux: inner, main: outer }, [a, b]) => {
            let merged = uim(inner, a, b, train);
            uim(outer, main, &merged, train)
        }
        (MultiFusion::Equal(u), [a, b]) => equal_uim(u, main, a, b, train),
        _ => panic!("fusion arity"),
    }
}

pub struct MamOracle {
    pub rgb_assisted: Arr,
    pub aux_enhanced: Arr,
    /// Per batch item, `HW x HW` row-major.
    pub affinity: Vec<Vec<f64>>,
}

/// Non-local cross-modal attention transcribed with explicit sums.
pub fn mam(p: &MamParameters, x_rgb: &Arr, x_aux: &Arr, train: bool) -> MamOracle {
    let joint = bconv_of(&p.fuse, &cat(&[x_rgb, x_aux]), train);
    let theta = conv_of(&p.query, &joint);
    let phi = conv_of(&p.key, &joint);
    let g_main = conv_of(&p.value_main, x_rgb);
    let g_aux = conv_of(&p.value_aux, x_aux);
    let (n, hw, w) = (x_rgb.n, x_rgb.h * x_rgb.w, x_rgb.w);
    let pos = |a: &Arr, b: usize, c: usize, i: usize| a.at(b, c, i / w, i % w);
    let mut affinity = Vec::with_capacity(n);
    let mut att_main = Arr::zeros(n, g_main.c, x_rgb.h, x_rgb.w);
    let mut att_aux = att_main.clone();
    for b in 0..n {
        let mut a = vec![0.0; hw * hw];
        for i in 0..hw {
            let scores: Vec<f64> = (0..hw)
                .map(|j| (0..theta.c).map(|c| pos(&theta, b, c, i) * pos(&phi, b, c, j)).sum())
                .collect();
            let top = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let exps: Vec<f64> = scores.iter().map(|s| (s - top).exp()).collect();
            let total: f64 = exps.iter().sum();
            for j in 0..hw {
                a[i * hw + j] = exps[j] / total;
            }
        }
        for c in 0..g_main.c {
            for i in 0..hw {
                let (mut sm, mut sa) = (0.0, 0.0);
                for j in 0..hw {
                    sm += a[i * hw + j] * pos(&g_main, b, c, j);
                    sa += a[i * hw + j] * pos(&g_aux, b, c, j);
                }
                let k = att_main.idx(b, c, i / w, i % w);
                att_main.v[k] = sm;
                att_aux.v[k] = sa;
            }
        }
        affinity.push(a);
    }
    MamOracle {
        rgb_assisted: conv_of(&p.project_main, &att_main),
        aux_enhanced: add(x_aux, &conv_of(&p.project_aux, &att_aux)),
        affinity,
    }
}

pub fn mam_level(p: &MamLevel, main: &Arr, aux: &[&Arr], train: bool) -> (Arr, Vec<Arr>) {
    let outs: Vec<MamOracle> = aux.iter().zip(&p.pairs).map(|(a, pp)| mam(pp, main, a, train)).collect();
    let assisted: Vec<&Arr> = outs.iter().map(|o| &o.rgb_assisted).collect();
    let main = bconv_of(&p.combine, &cat(&assisted), train);
    (main, outs.into_iter().map(|o| o.aux_enhanced).collect())
}

/// Dense coordinate-attention map `a_h[c, y] * a_w[c, x]`.
pub fn coordinate(p: &CoordinateAttention, x: &Arr, train: bool) -> Arr {
    let (h, w) = (x.h, x.w);
    let mut pooled = Arr::zeros(x.n, x.c, h + w, 1);
    for b in 0..x.n {
        for c in 0..x.c {
            for y in 0..h {
                let row: f64 = (0..w).map(|xx| x.at(b, c, y, xx)).sum();
                let i = pooled.idx(b, c, y, 0);
                pooled.v[i] = row / w as f64;
            }
            for xx in 0..w {
                let col: f64 = (0..h).map(|y| x.at(b, c, y, xx)).sum();
                let i = pooled.idx(b, c, h + xx, 0);
                pooled.v[i] = col / h as f64;
            }
        }
    }
    let mid = hswish(&bn_of(&p.bn, &conv_of(&p.reduce, &pooled), train));
    let split = |from: usize, len: usize| {
        let mut s = Arr::zeros(mid.n, mid.c, len, 1);
        for b in 0..mid.n {
            for c in 0..mid.c {
                for k in 0..len {
                    let i = s.idx(b, c, k, 0);
                    s.v[i] = mid.at(b, c, from + k, 0);
                }
            }
        }
        s
    };
    let a_h = sigmoid(&conv_of(&p.gate_h, &split(0, h)));
    let a_w = sigmoid(&conv_of(&p.gate_w, &split(h, w)));
    let mut out = x.clone();
    for b in 0..x.n {
        for c in 0..x.c {
            for y in 0..h {
                for xx in 0..w {
                    let i = out.idx(b, c, y, xx);
                    out.v[i] = a_h.at(b, c, y, 0) * a_w.at(b, c, xx, 0);
                }
            }
        }
    }
    out
}

pub fn spatial(p: &SpatialAttention, x: &Arr) -> Arr {
    let mut pooled = Arr::zeros(x.n, 2, x.h, x.w);
    for b in 0..x.n {
        for y in 0..x.h {
            for xx in 0..x.w {
                let vals: Vec<f64> = (0..x.c).map(|c| x.at(b, c, y, xx)).collect();
                let i0 = pooled.idx(b, 0, y, xx);
                let i1 = pooled.idx(b, 1, y, xx);
                pooled.v[i0] = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                pooled.v[i1] = vals.iter().sum::<f64>() / x.c as f64;
            }
        }
    }
    sigmoid(&conv_of(&p.conv, &pooled))
}

pub struct RfmOracle {
    /// Coordinate-stage outputs: main first.
    pub c_hat: Vec<Arr>,
    /// Spatial-stage outputs: main first.
    pub z: Vec<Arr>,
    pub fused: Arr,
}

/// One attention stage written equation by equation: gated inputs, the
/// cross-modal attention through the interaction block, the auxiliary and
/// main residual updates.
fn attention_stage(t: &[Arr], att: &[Arr], cross: &[Uim], merge: &BConv, train: bool) -> Vec<Arr> {
    let t_hat: Vec<Arr> = t.iter().zip(att).map(|(x, a)| bmul(x, a)).collect();
    let mut c_main_parts = Vec::new();
    let mut out_aux = Vec::new();
    for (k, u) in cross.iter().enumerate() {
        let m = k + 1;
        let att_rm = uim(u, &att[0], &att[m], train);
        out_aux.push(add(&add(&bmul(&t[m], &att_rm), &t_hat[m]), &t[m]));
        c_main_parts.push(add(&bmul(&t[0], &att_rm), &t_hat[0]));
    }
    let refs: Vec<&Arr> = c_main_parts.iter().collect();
    let mut out = vec![add(&bconv_of(merge, &cat(&refs), train), &t[0])];
    out.extend(out_aux);
    out
}

pub fn rfm(p: &RfmParameters, main: &Arr, aux: &[&Arr], train: bool) -> RfmOracle {
    let inputs: Vec<&Arr> = std::iter::once(main).chain(aux.iter().copied()).collect();
    let t: Vec<Arr> = inputs.iter().zip(&p.adapt).map(|(x, b)| bconv_of(b, x, train)).collect();
    let att: Vec<Arr> = t.iter().zip(&p.coordinate).map(|(x, ca)| coordinate(ca, x, train)).collect();
    let c_hat = attention_stage(&t, &att, &p.coordinate_cross, &p.coordinate_merge, train);
    let s_att: Vec<Arr> = c_hat.iter().zip(&p.spatial).map(|(x, sa)| spatial(sa, x)).collect();
    let z = attention_stage(&c_hat, &s_att, &p.spatial_cross, &p.spatial_merge, train);
    let z_aux: Vec<&Arr> = z[1..].iter().collect();
    let fused = fusion(&p.fusion, &z[0], &z_aux, train);
    RfmOracle { c_hat, z, fused }
}

pub struct CoarseOracle {
    pub per_stream: Vec<Arr>,
    pub coarse: Arr,
}

pub fn coarse(p: &CoarseMapParameters, level5: &[&Arr], train: bool) -> CoarseOracle {
    let per_stream: Vec<Arr> = level5
        .iter()
        .zip(&p.last_conv)
        .map(|(x, lc)| conv_of(&lc.out, &bconv_of(&lc.second, &bconv_of(&lc.first, x, train), train)))
        .collect();
    let aux: Vec<&Arr> = per_stream[1..].iter().collect();
    let coarse = fusion(&p.fusion, &per_stream[0], &aux, train);
    CoarseOracle { per_stream, coarse }
}

/// `f * sigmoid(resize(cm)) + f`.
pub fn hmap(f: &Arr, cm: &Arr) -> Arr {
    let gate = sigmoid(&resize(cm, f.h, f.w));
    add(&bmul(f, &gate), f)
}

pub struct DecoderOracle {
    pub features: Vec<Arr>,
    pub logits: Vec<Arr>,
}

pub fn decoder(p: &Decoder, fused: &[Arr], out: (usize, usize), train: bool) -> DecoderOracle {
    let mut features: Vec<Option<Arr>> = vec![None; fused.len()];
    let mut deeper: Option<Arr> = None;
    for i in (0..fused.len()).rev() {
        let input = match &deeper {
            None => fused[i].clone(),
            Some(d) => {
                let up = if (d.h, d.w) == (fused[i].h, fused[i].w) { d.clone() } else { resize(d, fused[i].h, fused[i].w) };
                cat(&[&up, &fused[i]])
            }
        };
        let y = bconv_of(&p.blocks[i], &input, train);
        deeper = Some(y.clone());
        features[i] = Some(y);
    }
    let features: Vec<Arr> = features.into_iter().map(Option::unwrap).collect();
    let logits = features
        .iter()
        .zip(&p.heads)
        .map(|(f, h)| {
            let l = conv_of(h, f);
            if (l.h, l.w) == out { l } else { resize(&l, out.0, out.1) }
        })
        .collect();
    DecoderOracle { features, logits }
}

/// Replaces every parameter with random values so that batch-norm affine
/// terms and running statistics are exercised too.
pub fn randomize(store: &ParamStore, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in store.iter() {
        let t = p.var.as_tensor();
        let n = t.elem_count();
        let (lo, hi) = if p.name.ends_with("running_var") || p.name.ends_with("bn.weight") {
            (0.5, 1.5)
        } else {
            (-0.5, 0.5)
        };
        let v: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
        let new = Tensor::from_vec(v, t.shape(), t.device()).unwrap().to_dtype(t.dtype()).unwrap();
        p.var.set(&new).unwrap();
    }
}
