//! Trilinear upsampling with corner-aligned sampling.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::fmath;
use crate::tensor::{Scalar, Tensor};

/// Source coordinate and interpolation weights along one axis for a given
/// output index. Corner-aligned: endpoints map to endpoints.
#[inline]
fn axis_lerp(out_idx: usize, in_extent: usize, out_extent: usize) -> (usize, usize, f64) {
    if out_extent == 1 || in_extent == 1 {
        return (0, 0, 0.0);
    }
    let src = out_idx as f64 * (in_extent - 1) as f64 / (out_extent - 1) as f64;
    let i0 = fmath::floor(src) as usize;
    let i0 = i0.min(in_extent - 1);
    let i1 = (i0 + 1).min(in_extent - 1);
    (i0, i1, src - i0 as f64)
}

fn check_factor(factor: [usize; 3]) -> Result<()> {
    if factor.iter().any(|&f| f == 0) {
        return Err(CoreError::InvalidConfig(format!(
            "upsample factor must be >= 1, got {factor:?}"
        )));
    }
    Ok(())
}

/// Upsamples `[C,D,H,W]` by an integer factor per axis. Factor 1 is the
/// identity; constants stay constant because the corner weights sum to 1.
pub fn upsample3d<S: Scalar>(x: &Tensor<S>, factor: [usize; 3]) -> Result<Tensor<S>> {
    check_factor(factor)?;
    let (c, d, h, w) = x.dims4("upsample3d")?;
    if factor == [1, 1, 1] {
        return Ok(x.clone());
    }
    let (od, oh, ow) = (d * factor[0], h * factor[1], w * factor[2]);
    let mut out = Tensor::<S>::zeros(&[c, od, oh, ow]);
    let xs = x.data();
    let in_spatial = d * h * w;

    // Precompute per-axis corner indices and weights.
    let dl: Vec<_> = (0..od).map(|o| axis_lerp(o, d, od)).collect();
    let hl: Vec<_> = (0..oh).map(|o| axis_lerp(o, h, oh)).collect();
    let wl: Vec<_> = (0..ow).map(|o| axis_lerp(o, w, ow)).collect();

    for (ch, chunk) in out.data_mut().chunks_mut(od * oh * ow).enumerate() {
        let base = ch * in_spatial;
        let mut o = 0usize;
        for &(d0, d1, td) in &dl {
            for &(h0, h1, th) in &hl {
                for &(w0, w1, tw) in &wl {
                    let mut acc = 0.0f64;
                    for (di, wd) in [(d0, 1.0 - td), (d1, td)] {
                        if wd == 0.0 {
                            continue;
                        }
                        for (hi, wh) in [(h0, 1.0 - th), (h1, th)] {
                            if wh == 0.0 {
                                continue;
                            }
                            let row = base + (di * h + hi) * w;
                            for (wi, ww) in [(w0, 1.0 - tw), (w1, tw)] {
                                if ww == 0.0 {
                                    continue;
                                }
                                acc += wd * wh * ww * xs[row + wi].to_f64();
                            }
                        }
                    }
                    chunk[o] = S::from_f64(acc);
                    o += 1;
                }
            }
        }
    }
    Ok(out)
}

/// Transpose of the interpolation map: scatters each output gradient back
/// to its source corners with the same weights.
pub fn upsample3d_backward<S: Scalar>(
    grad: &Tensor<S>,
    input_shape: &[usize],
    factor: [usize; 3],
) -> Result<Tensor<S>> {
    check_factor(factor)?;
    if input_shape.len() != 4 {
        return Err(CoreError::ShapeMismatch {
            op: "upsample3d_backward",
            detail: format!("input shape must be rank 4, got {input_shape:?}"),
        });
    }
    let (c, d, h, w) = (
        input_shape[0],
        input_shape[1],
        input_shape[2],
        input_shape[3],
    );
    let expect = [c, d * factor[0], h * factor[1], w * factor[2]];
    if grad.shape() != expect {
        return Err(CoreError::ShapeMismatch {
            op: "upsample3d_backward",
            detail: format!("grad: expected {:?}, got {:?}", expect, grad.shape()),
        });
    }
    if factor == [1, 1, 1] {
        return Ok(grad.clone());
    }
    let (od, oh, ow) = (expect[1], expect[2], expect[3]);
    // Accumulate in f64 and convert once at the end.
    let mut acc = alloc::vec![0.0f64; c * d * h * w];
    let dl: Vec<_> = (0..od).map(|o| axis_lerp(o, d, od)).collect();
    let hl: Vec<_> = (0..oh).map(|o| axis_lerp(o, h, oh)).collect();
    let wl: Vec<_> = (0..ow).map(|o| axis_lerp(o, w, ow)).collect();
    let gs = grad.data();
    for ch in 0..c {
        let in_base = ch * d * h * w;
        let out_base = ch * od * oh * ow;
        let mut o = out_base;
        for &(d0, d1, td) in &dl {
            for &(h0, h1, th) in &hl {
                for &(w0, w1, tw) in &wl {
                    let g = gs[o].to_f64();
                    o += 1;
                    if g == 0.0 {
                        continue;
                    }
                    for (di, wd) in [(d0, 1.0 - td), (d1, td)] {
                        if wd == 0.0 {
                            continue;
                        }
                        for (hi, wh) in [(h0, 1.0 - th), (h1, th)] {
                            if wh == 0.0 {
                                continue;
                            }
                            let row = in_base + (di * h + hi) * w;
                            for (wi, ww) in [(w0, 1.0 - tw), (w1, tw)] {
                                if ww == 0.0 {
                                    continue;
                                }
                                acc[row + wi] += wd * wh * ww * g;
                            }
                        }
                    }
                }
            }
        }
    }
    let mut out = Tensor::<S>::zeros(input_shape);
    for (o, &a) in out.data_mut().iter_mut().zip(&acc) {
        *o = S::from_f64(a);
    }
    Ok(out)
}
