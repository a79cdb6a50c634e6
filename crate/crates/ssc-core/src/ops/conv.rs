//! Direct 3D convolution (cross-correlation) with stride, dilation and
//! zero padding, plus exact gradients.

use alloc::format;
use alloc::vec::Vec;

use super::for_each_chunk_mut;
use crate::error::{CoreError, Result};
use crate::tensor::{ConvSpec, Scalar, Tensor};

/// Gradients of [`conv3d`] with respect to its three inputs.
pub struct ConvGrads<S: Scalar> {
    pub grad_input: Tensor<S>,
    pub grad_weights: Tensor<S>,
    pub grad_bias: Tensor<S>,
}

fn check_forward_shapes<S: Scalar>(
    input: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
    spec: &ConvSpec,
) -> Result<([usize; 3], [usize; 3])> {
    spec.validate()?;
    let (c, d, h, w) = input.dims4("conv3d")?;
    if c != spec.in_channels {
        return Err(CoreError::ShapeMismatch {
            op: "conv3d",
            detail: format!(
                "input channel axis: expected {}, got {c}",
                spec.in_channels
            ),
        });
    }
    let wshape = spec.weight_shape();
    if weights.shape() != wshape {
        return Err(CoreError::ShapeMismatch {
            op: "conv3d",
            detail: format!(
                "weight tensor: expected {:?}, got {:?}",
                wshape,
                weights.shape()
            ),
        });
    }
    if bias.shape() != [spec.out_channels] {
        return Err(CoreError::ShapeMismatch {
            op: "conv3d",
            detail: format!(
                "bias tensor: expected [{}], got {:?}",
                spec.out_channels,
                bias.shape()
            ),
        });
    }
    let out = spec.out_dims([d, h, w])?;
    Ok(([d, h, w], out))
}

/// Valid output range `[lo, hi]` along one axis for a fixed kernel tap,
/// such that the sampled input index stays inside `[0, in_extent)`.
/// `base = tap * dilation - padding`. Returns `None` when empty.
#[inline]
fn valid_out_range(base: i64, stride: i64, out_extent: i64, in_extent: i64) -> Option<(i64, i64)> {
    // lo = ceil(-base / s), hi = floor((in - 1 - base) / s), clamped to [0, out).
    let lo = (-base + stride - 1).div_euclid(stride).max(0);
    let hi = (in_extent - 1 - base).div_euclid(stride).min(out_extent - 1);
    if lo > hi {
        None
    } else {
        Some((lo, hi))
    }
}

/// Dilated/strided cross-correlation of `input [C,D,H,W]` with
/// `weights [K,C,kd,kh,kw]` plus per-channel bias, zero padding outside
/// the input. Each output element accumulates in `(c, kd, kh, kw)` order.
pub fn conv3d<S: Scalar>(
    input: &Tensor<S>,
    weights: &Tensor<S>,
    bias: &Tensor<S>,
    spec: &ConvSpec,
) -> Result<Tensor<S>> {
    let ([d, h, w], [od, oh, ow]) = check_forward_shapes(input, weights, bias, spec)?;
    let (kd, kh, kw) = (spec.kernel[0], spec.kernel[1], spec.kernel[2]);
    let (sd, sh, sw) = (
        spec.stride[0] as i64,
        spec.stride[1] as i64,
        spec.stride[2] as i64,
    );
    let (dd, dh, dw) = (
        spec.dilation[0] as i64,
        spec.dilation[1] as i64,
        spec.dilation[2] as i64,
    );
    let (pd, ph, pw) = (
        spec.padding[0] as i64,
        spec.padding[1] as i64,
        spec.padding[2] as i64,
    );
    let c_in = spec.in_channels;
    let xs = input.data();
    let ws = weights.data();
    let bs = bias.data();

    let mut out = Tensor::<S>::zeros(&[spec.out_channels, od, oh, ow]);
    let spatial = od * oh * ow;
    for_each_chunk_mut(out.data_mut(), spatial, |k, chunk| {
        let wk = &ws[k * c_in * kd * kh * kw..(k + 1) * c_in * kd * kh * kw];
        let bias_k = bs[k].to_f64();
        let mut acc: Vec<f64> = Vec::with_capacity(ow);
        for od_i in 0..od {
            for oh_i in 0..oh {
                acc.clear();
                acc.resize(ow, bias_k);
                for c in 0..c_in {
                    for kd_i in 0..kd {
                        let id = od_i as i64 * sd + kd_i as i64 * dd - pd;
                        if id < 0 || id >= d as i64 {
                            continue;
                        }
                        for kh_i in 0..kh {
                            let ih = oh_i as i64 * sh + kh_i as i64 * dh - ph;
                            if ih < 0 || ih >= h as i64 {
                                continue;
                            }
                            let row = ((c * d + id as usize) * h + ih as usize) * w;
                            let wrow = ((c * kd + kd_i) * kh + kh_i) * kw;
                            for kw_i in 0..kw {
                                let base = kw_i as i64 * dw - pw;
                                let Some((lo, hi)) = valid_out_range(base, sw, ow as i64, w as i64)
                                else {
                                    continue;
                                };
                                let wv = wk[wrow + kw_i].to_f64();
                                if sw == 1 {
                                    // Contiguous input row: let the slice
                                    // zip elide the bounds checks.
                                    let start = row + (lo + base) as usize;
                                    let len = (hi - lo + 1) as usize;
                                    for (a, x) in acc[lo as usize..=hi as usize]
                                        .iter_mut()
                                        .zip(&xs[start..start + len])
                                    {
                                        *a += wv * x.to_f64();
                                    }
                                } else {
                                    let mut iw = lo * sw + base;
                                    for o in lo..=hi {
                                        acc[o as usize] += wv * xs[row + iw as usize].to_f64();
                                        iw += sw;
                                    }
                                }
                            }
                        }
                    }
                }
                let orow = (od_i * oh + oh_i) * ow;
                for (o, &a) in acc.iter().enumerate() {
                    chunk[orow + o] = S::from_f64(a);
                }
            }
        }
    });
    Ok(out)
}

/// Exact gradients of the convolution's sum-of-products map.
pub fn conv3d_backward<S: Scalar>(
    grad_out: &Tensor<S>,
    input: &Tensor<S>,
    weights: &Tensor<S>,
    spec: &ConvSpec,
) -> Result<ConvGrads<S>> {
    spec.validate()?;
    let (c_in, d, h, w) = input.dims4("conv3d_backward")?;
    if c_in != spec.in_channels {
        return Err(CoreError::ShapeMismatch {
            op: "conv3d_backward",
            detail: format!("input channel axis: expected {}, got {c_in}", spec.in_channels),
        });
    }
    if weights.shape() != spec.weight_shape() {
        return Err(CoreError::ShapeMismatch {
            op: "conv3d_backward",
            detail: format!(
                "weight tensor: expected {:?}, got {:?}",
                spec.weight_shape(),
                weights.shape()
            ),
        });
    }
    let out_dims = spec.out_dims([d, h, w])?;
    let expect_out = [spec.out_channels, out_dims[0], out_dims[1], out_dims[2]];
    if grad_out.shape() != expect_out {
        return Err(CoreError::ShapeMismatch {
            op: "conv3d_backward",
            detail: format!(
                "grad_out: expected {:?}, got {:?}",
                expect_out,
                grad_out.shape()
            ),
        });
    }
    let [od, oh, ow] = out_dims;
    let k_out = spec.out_channels;
    let (kd, kh, kw) = (spec.kernel[0], spec.kernel[1], spec.kernel[2]);
    let (sd, sh, sw) = (
        spec.stride[0] as i64,
        spec.stride[1] as i64,
        spec.stride[2] as i64,
    );
    let (dd, dh, dw) = (
        spec.dilation[0] as i64,
        spec.dilation[1] as i64,
        spec.dilation[2] as i64,
    );
    let (pd, ph, pw) = (
        spec.padding[0] as i64,
        spec.padding[1] as i64,
        spec.padding[2] as i64,
    );
    let gos = grad_out.data();
    let xs = input.data();
    let ws = weights.data();
    let out_spatial = od * oh * ow;

    // grad_bias[k] = sum of grad_out over the k-th channel.
    let mut grad_bias = Tensor::<S>::zeros(&[k_out]);
    for (k, gb) in grad_bias.data_mut().iter_mut().enumerate() {
        let mut acc = 0.0f64;
        for &g in &gos[k * out_spatial..(k + 1) * out_spatial] {
            acc += g.to_f64();
        }
        *gb = S::from_f64(acc);
    }

    // grad_weights: gather over the output positions each tap touches.
    let mut grad_weights = Tensor::<S>::zeros(&spec.weight_shape());
    let wchunk = c_in * kd * kh * kw;
    for_each_chunk_mut(grad_weights.data_mut(), wchunk, |k, chunk| {
        let go_k = &gos[k * out_spatial..(k + 1) * out_spatial];
        for c in 0..c_in {
            for kd_i in 0..kd {
                let based = kd_i as i64 * dd - pd;
                let Some((dlo, dhi)) = valid_out_range(based, sd, od as i64, d as i64) else {
                    continue;
                };
                for kh_i in 0..kh {
                    let baseh = kh_i as i64 * dh - ph;
                    let Some((hlo, hhi)) = valid_out_range(baseh, sh, oh as i64, h as i64) else {
                        continue;
                    };
                    for kw_i in 0..kw {
                        let basew = kw_i as i64 * dw - pw;
                        let Some((wlo, whi)) = valid_out_range(basew, sw, ow as i64, w as i64)
                        else {
                            continue;
                        };
                        let mut acc = 0.0f64;
                        for o_d in dlo..=dhi {
                            let id = (o_d * sd + based) as usize;
                            for o_h in hlo..=hhi {
                                let ih = (o_h * sh + baseh) as usize;
                                let go_row = (o_d as usize * oh + o_h as usize) * ow;
                                let in_row = ((c * d + id) * h + ih) * w;
                                if sw == 1 {
                                    let gs = &go_k[go_row + wlo as usize..=go_row + whi as usize];
                                    let start = in_row + (wlo + basew) as usize;
                                    for (g, x) in gs.iter().zip(&xs[start..start + gs.len()]) {
                                        acc += g.to_f64() * x.to_f64();
                                    }
                                } else {
                                    let mut iw = wlo * sw + basew;
                                    for o_w in wlo..=whi {
                                        acc += go_k[go_row + o_w as usize].to_f64()
                                            * xs[in_row + iw as usize].to_f64();
                                        iw += sw;
                                    }
                                }
                            }
                        }
                        chunk[((c * kd + kd_i) * kh + kh_i) * kw + kw_i] = S::from_f64(acc);
                    }
                }
            }
        }
    });

    // grad_input. Stride-1 convolutions (the hot layers) reduce to a
    // correlation of grad_out with channel-transposed, spatially flipped
    // weights, which reuses the fast forward kernel; everything else
    // falls back to a per-cell gather. Both formulations are
    // deterministic for any thread count.
    if spec.stride == [1, 1, 1] {
        let flip_pad = [
            (spec.dilation[0] * (kd - 1)).checked_sub(spec.padding[0]),
            (spec.dilation[1] * (kh - 1)).checked_sub(spec.padding[1]),
            (spec.dilation[2] * (kw - 1)).checked_sub(spec.padding[2]),
        ];
        if let [Some(pd2), Some(ph2), Some(pw2)] = flip_pad {
            let mut flipped = Tensor::<S>::zeros(&[c_in, k_out, kd, kh, kw]);
            {
                let fs = flipped.data_mut();
                for k in 0..k_out {
                    for c in 0..c_in {
                        for kd_i in 0..kd {
                            for kh_i in 0..kh {
                                for kw_i in 0..kw {
                                    let src = (((k * c_in + c) * kd + kd_i) * kh + kh_i) * kw + kw_i;
                                    let dst = (((c * k_out + k) * kd + (kd - 1 - kd_i)) * kh
                                        + (kh - 1 - kh_i))
                                        * kw
                                        + (kw - 1 - kw_i);
                                    fs[dst] = ws[src];
                                }
                            }
                        }
                    }
                }
            }
            let tspec = ConvSpec {
                kernel: spec.kernel,
                stride: [1, 1, 1],
                dilation: spec.dilation,
                padding: [pd2, ph2, pw2],
                in_channels: k_out,
                out_channels: c_in,
            };
            let zero_bias = Tensor::<S>::zeros(&[c_in]);
            let grad_input = conv3d(grad_out, &flipped, &zero_bias, &tspec)?;
            debug_assert_eq!(grad_input.shape(), input.shape());
            return Ok(ConvGrads {
                grad_input,
                grad_weights,
                grad_bias,
            });
        }
    }
    let mut grad_input = Tensor::<S>::zeros(&[c_in, d, h, w]);
    let in_spatial = d * h * w;
    let wstride = c_in * kd * kh * kw;
    for_each_chunk_mut(grad_input.data_mut(), in_spatial, |c, chunk| {
        for id in 0..d as i64 {
            for kd_i in 0..kd {
                let t = id + pd - kd_i as i64 * dd;
                if t < 0 || t % sd != 0 {
                    continue;
                }
                let o_d = t / sd;
                if o_d >= od as i64 {
                    continue;
                }
                for ih in 0..h as i64 {
                    for kh_i in 0..kh {
                        let t = ih + ph - kh_i as i64 * dh;
                        if t < 0 || t % sh != 0 {
                            continue;
                        }
                        let o_h = t / sh;
                        if o_h >= oh as i64 {
                            continue;
                        }
                        let go_row = (o_d as usize * oh + o_h as usize) * ow;
                        let in_row = (id as usize * h + ih as usize) * w;
                        for iw in 0..w as i64 {
                            for kw_i in 0..kw {
                                let t = iw + pw - kw_i as i64 * dw;
                                if t < 0 || t % sw != 0 {
                                    continue;
                                }
                                let o_w = t / sw;
                                if o_w >= ow as i64 {
                                    continue;
                                }
                                let widx = ((c * kd + kd_i) * kh + kh_i) * kw + kw_i;
                                let goidx = go_row + o_w as usize;
                                let mut acc = chunk[in_row + iw as usize].to_f64();
                                for k in 0..k_out {
                                    acc += ws[k * wstride + widx].to_f64()
                                        * gos[k * out_spatial + goidx].to_f64();
                                }
                                chunk[in_row + iw as usize] = S::from_f64(acc);
                            }
                        }
                    }
                }
            }
        }
    });

    Ok(ConvGrads {
        grad_input,
        grad_weights,
        grad_bias,
    })
}
