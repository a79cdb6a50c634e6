//! Brute-force reference kernels and randomization helpers shared by the
//! integration tests. Everything here is written from the operation
//! definitions with plain nested loops, independent of the library's
//! kernel implementations.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssc_core::{ConvSpec, Tensor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor<f64> {
    let len: usize = shape.iter().product();
    let data: Vec<f64> = (0..len).map(|_| rng.gen_range(-scale..scale)).collect();
    Tensor::from_vec(shape, data).unwrap()
}

pub fn max_rel_err(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-12))
        .fold(0.0, f64::max)
}

/// Six-nested-loop convolution with zero padding, accumulating in
/// `(c, kd, kh, kw)` order per output voxel (the same order as the
/// library kernel, so f64-vs-f64 comparisons are bit-exact).
///
/// When `macs` is provided, every logical multiply-accumulate of the
/// padded convolution is counted, including taps that fall on the zero
/// padding — the convention analytic FLOP counts use.
pub fn naive_conv3d(
    input: &Tensor<f64>,
    weights: &Tensor<f64>,
    bias: &Tensor<f64>,
    spec: &ConvSpec,
    mut macs: Option<&mut u64>,
) -> Tensor<f64> {
    let (c_in, d, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    assert_eq!(c_in, spec.in_channels);
    let out = spec.out_dims([d, h, w]).unwrap();
    let mut result = Tensor::<f64>::zeros(&[spec.out_channels, out[0], out[1], out[2]]);
    for k in 0..spec.out_channels {
        for od in 0..out[0] {
            for oh in 0..out[1] {
                for ow in 0..out[2] {
                    let mut acc = bias.data()[k];
                    for c in 0..c_in {
                        for kd in 0..spec.kernel[0] {
                            for kh in 0..spec.kernel[1] {
                                for kw in 0..spec.kernel[2] {
                                    if let Some(m) = macs.as_deref_mut() {
                                        *m += 1;
                                    }
                                    let id = (od * spec.stride[0] + kd * spec.dilation[0]) as i64
                                        - spec.padding[0] as i64;
                                    let ih = (oh * spec.stride[1] + kh * spec.dilation[1]) as i64
                                        - spec.padding[1] as i64;
                                    let iw = (ow * spec.stride[2] + kw * spec.dilation[2]) as i64
                                        - spec.padding[2] as i64;
                                    if id < 0
                                        || id >= d as i64
                                        || ih < 0
                                        || ih >= h as i64
                                        || iw < 0
                                        || iw >= w as i64
                                    {
                                        continue;
                                    }
                                    let x = input.at(&[c, id as usize, ih as usize, iw as usize]);
                                    let wv = weights.at(&[k, c, kd, kh, kw]);
                                    acc += wv * x;
                                }
                            }
                        }
                    }
                    *result.at_mut(&[k, od, oh, ow]) = acc;
                }
            }
        }
    }
    result
}

/// Plain per-channel mean.
pub fn naive_global_avg_pool(input: &Tensor<f64>) -> Tensor<f64> {
    let (c, d, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let mut out = Tensor::<f64>::zeros(&[c, 1, 1, 1]);
    for ch in 0..c {
        let mut sum = 0.0;
        for id in 0..d {
            for ih in 0..h {
                for iw in 0..w {
                    sum += input.at(&[ch, id, ih, iw]);
                }
            }
        }
        out.data_mut()[ch] = sum / (d * h * w) as f64;
    }
    out
}

/// Scalar corner-aligned trilinear interpolation evaluated independently
/// per output voxel.
pub fn naive_upsample(input: &Tensor<f64>, factor: [usize; 3]) -> Tensor<f64> {
    let (c, d, h, w) = (
        input.shape()[0],
        input.shape()[1],
        input.shape()[2],
        input.shape()[3],
    );
    let (od, oh, ow) = (d * factor[0], h * factor[1], w * factor[2]);
    let src = |o: usize, i: usize, out: usize| -> f64 {
        if out == 1 || i == 1 {
            0.0
        } else {
            o as f64 * (i - 1) as f64 / (out - 1) as f64
        }
    };
    let mut result = Tensor::<f64>::zeros(&[c, od, oh, ow]);
    for ch in 0..c {
        for zd in 0..od {
            for zh in 0..oh {
                for zw in 0..ow {
                    let (sd, sh, sw) = (src(zd, d, od), src(zh, h, oh), src(zw, w, ow));
                    let mut acc = 0.0;
                    let corners = |s: f64, extent: usize| -> [(usize, f64); 2] {
                        let lo = (s.floor() as usize).min(extent - 1);
                        let hi = (lo + 1).min(extent - 1);
                        let t = s - lo as f64;
                        [(lo, 1.0 - t), (hi, t)]
                    };
                    for (id, wd) in corners(sd, d) {
                        for (ih, wh) in corners(sh, h) {
                            for (iw, ww) in corners(sw, w) {
                                acc += wd * wh * ww * input.at(&[ch, id, ih, iw]);
                            }
                        }
                    }
                    *result.at_mut(&[ch, zd, zh, zw]) = acc;
                }
            }
        }
    }
    result
}

/// Per-voxel scalar softmax.
pub fn naive_softmax(logits: &Tensor<f64>) -> Tensor<f64> {
    let (c, d, h, w) = (
        logits.shape()[0],
        logits.shape()[1],
        logits.shape()[2],
        logits.shape()[3],
    );
    let mut out = Tensor::<f64>::zeros(logits.shape());
    for id in 0..d {
        for ih in 0..h {
            for iw in 0..w {
                let max = (0..c)
                    .map(|ch| logits.at(&[ch, id, ih, iw]))
                    .fold(f64::NEG_INFINITY, f64::max);
                let denom: f64 = (0..c)
                    .map(|ch| (logits.at(&[ch, id, ih, iw]) - max).exp())
                    .sum();
                for ch in 0..c {
                    *out.at_mut(&[ch, id, ih, iw]) =
                        (logits.at(&[ch, id, ih, iw]) - max).exp() / denom;
                }
            }
        }
    }
    out
}

/// Scalar cross entropy: mean of `-ln p[label]` over non-ignored voxels.
pub fn naive_cross_entropy(logits: &Tensor<f64>, labels: &[u8], ignore: &[bool]) -> f64 {
    let p = naive_softmax(logits);
    let (_, d, h, w) = (
        logits.shape()[0],
        logits.shape()[1],
        logits.shape()[2],
        logits.shape()[3],
    );
    let mut sum = 0.0;
    let mut count = 0usize;
    let mut v = 0usize;
    for id in 0..d {
        for ih in 0..h {
            for iw in 0..w {
                if !ignore[v] {
                    sum += -p.at(&[labels[v] as usize, id, ih, iw]).ln();
                    count += 1;
                }
                v += 1;
            }
        }
    }
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

// ---------------------------------------------------------------------
// Instrumented reference forward pass: re-walks the architecture with
// the naive convolution kernel, counting one MAC per logical
// multiply-accumulate (padding taps included) and one op per element
// for the cheap layers. Outputs are bit-identical to `net::forward`
// because the naive kernel accumulates in the same per-voxel order.

use std::collections::HashMap;

use ssc_core::net::{NetworkConfig, ParameterSet};
use ssc_core::ops;

pub struct Instrumented<'a> {
    params: &'a ParameterSet<f64>,
    macs: HashMap<String, u64>,
}

impl<'a> Instrumented<'a> {
    fn conv(&mut self, layer: &str, x: &Tensor<f64>, spec: ConvSpec) -> Tensor<f64> {
        let (w, b) = self.params.conv(layer).unwrap();
        let mut macs = 0u64;
        let y = naive_conv3d(x, w, b, &spec, Some(&mut macs));
        self.macs.insert(layer.to_string(), macs);
        y
    }

    fn elementwise(&mut self, name: &str, elems: u64) {
        self.macs.insert(name.to_string(), elems);
    }
}

/// Reference forward pass over the architecture implied by `cfg`.
pub fn instrumented_forward(
    cfg: &NetworkConfig,
    params: &ParameterSet<f64>,
    input: &Tensor<f64>,
) -> (Tensor<f64>, Tensor<f64>, HashMap<String, u64>) {
    let mut ex = Instrumented {
        params,
        macs: HashMap::new(),
    };
    let k3 = |cin: usize, cout: usize, s: usize, d: usize| ConvSpec::isotropic(cin, cout, 3, s, d, d);
    let k1 = |cin: usize, cout: usize| ConvSpec::isotropic(cin, cout, 1, 1, 1, 0);
    let count = |t: &Tensor<f64>| t.len() as u64;

    let stem = cfg.stem_channels;
    let y = ex.conv("stem.conv1", input, k3(1, stem, 1, 1));
    ex.elementwise("stem.conv1.relu", count(&y));
    let x = ops::relu(&y);
    let y = ex.conv("stem.conv2", &x, k3(stem, stem, 1, 1));
    ex.elementwise("stem.conv2.relu", count(&y));
    let low = ops::relu(&y);

    let mut x = low.clone();
    let mut width = stem;
    for i in 0..cfg.num_down_convs() {
        let name = format!("down.conv{}", i + 1);
        let y = ex.conv(&name, &x, k3(width, cfg.stage_channels[0], 2, 1));
        ex.elementwise(&format!("{name}.relu"), count(&y));
        x = ops::relu(&y);
        width = cfg.stage_channels[0];
    }

    let mut stages = Vec::new();
    let mut block_index = 0usize;
    for (s, &channels) in cfg.stage_channels.iter().enumerate() {
        if channels != width {
            x = ex.conv(&format!("stage{}.proj", s + 1), &x, k1(width, channels));
            width = channels;
        }
        for b in 0..cfg.blocks_per_stage[s] {
            let blk = format!("stage{}.block{}", s + 1, b);
            let d = cfg.block_dilation(block_index);
            block_index += 1;
            let u = ex.conv(&format!("{blk}.conv1"), &x, k3(channels, channels, 1, d));
            ex.elementwise(&format!("{blk}.relu1"), count(&u));
            let ur = ops::relu(&u);
            let v = ex.conv(&format!("{blk}.conv2"), &ur, k3(channels, channels, 1, d));
            ex.elementwise(&format!("{blk}.add"), count(&v));
            let sum = ops::add(&x, &v).unwrap();
            ex.elementwise(&format!("{blk}.relu2"), count(&sum));
            x = ops::relu(&sum);
        }
        stages.push(x.clone());
    }

    let mut ga = |ex: &mut Instrumented, x: &Tensor<f64>| -> Tensor<f64> {
        let c = x.shape()[0];
        let mid = c / cfg.attention_reduction;
        ex.elementwise("ga.pool", count(x));
        let pooled = ops::global_avg_pool3d(x).unwrap();
        let z = ex.conv("ga.fc1", &pooled, k1(c, mid));
        ex.elementwise("ga.fc1.relu", mid as u64);
        let zr = ops::relu(&z);
        let gate_pre = ex.conv("ga.fc2", &zr, k1(mid, c));
        ex.elementwise("ga.gate.sigmoid", c as u64);
        let gate = ops::sigmoid(&gate_pre);
        ex.elementwise("ga.scale", count(x));
        let scale = Tensor::from_vec(&[c], gate.data().to_vec()).unwrap();
        ops::scale_per_channel(x, &scale).unwrap()
    };

    let factor = [cfg.downsample_factor; 3];
    let feature = if cfg.use_feature_agg {
        let cat = ops::concat_channels(&[&stages[0], &stages[1], &stages[2]]).unwrap();
        let cat_c: usize = cfg.stage_channels.iter().sum();
        let red = ex.conv("agg.reduce", &cat, k1(cat_c, cfg.agg_channels));
        let gated = if cfg.use_ga { ga(&mut ex, &red) } else { red };
        let up = ops::upsample3d(&gated, factor).unwrap();
        ex.elementwise("agg.upsample", count(&up));
        let cat2 = ops::concat_channels(&[&up, &low]).unwrap();
        let fused = ex.conv(
            "agg.fuse",
            &cat2,
            k1(cfg.agg_channels + stem, cfg.agg_channels),
        );
        ex.elementwise("agg.fuse.relu", count(&fused));
        ops::relu(&fused)
    } else {
        let gated = if cfg.use_ga {
            ga(&mut ex, &stages[2])
        } else {
            stages[2].clone()
        };
        let up = ops::upsample3d(&gated, factor).unwrap();
        ex.elementwise("agg.upsample", count(&up));
        let fused = ex.conv(
            "agg.direct",
            &up,
            k1(cfg.stage_channels[2], cfg.agg_channels),
        );
        ex.elementwise("agg.direct.relu", count(&fused));
        ops::relu(&fused)
    };

    let occ = ex.conv("head.occ", &feature, k1(cfg.agg_channels, 2));
    let sem = if cfg.use_condition {
        let q = ops::softmax_channels(&occ).unwrap();
        ex.elementwise("head.softmax", count(&q));
        let cat = ops::concat_channels(&[&feature, &q]).unwrap();
        ex.conv(
            "head.sem",
            &cat,
            k1(cfg.agg_channels + 2, cfg.sem_channels()),
        )
    } else {
        ex.conv("head.sem", &feature, k1(cfg.agg_channels, cfg.sem_channels()))
    };
    (occ, sem, ex.macs)
}

