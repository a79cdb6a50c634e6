//! Channel softmax and masked softmax cross entropy.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::fmath;
use crate::tensor::{Scalar, Tensor};

/// Per-voxel softmax over the channel axis, log-sum-exp stabilized.
pub fn softmax_channels<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    let (c, d, h, w) = x.dims4("softmax_channels")?;
    let spatial = d * h * w;
    let xs = x.data();
    let mut out = Tensor::<S>::zeros(x.shape());
    let os = out.data_mut();
    let mut col = Vec::with_capacity(c);
    for v in 0..spatial {
        col.clear();
        let mut max = f64::NEG_INFINITY;
        for ch in 0..c {
            let val = xs[ch * spatial + v].to_f64();
            col.push(val);
            if val > max {
                max = val;
            }
        }
        let mut denom = 0.0f64;
        for e in col.iter_mut() {
            *e = fmath::exp(*e - max);
            denom += *e;
        }
        for ch in 0..c {
            os[ch * spatial + v] = S::from_f64(col[ch] / denom);
        }
    }
    Ok(out)
}

/// Jacobian-vector product of the channel softmax:
/// `grad_x[c] = y[c] * (grad[c] - sum_j grad[j] * y[j])` per voxel.
pub fn softmax_backward<S: Scalar>(y: &Tensor<S>, grad: &Tensor<S>) -> Result<Tensor<S>> {
    y.check_same_shape(grad, "softmax_backward")?;
    let (c, d, h, w) = y.dims4("softmax_backward")?;
    let spatial = d * h * w;
    let ys = y.data();
    let gs = grad.data();
    let mut out = Tensor::<S>::zeros(y.shape());
    let os = out.data_mut();
    for v in 0..spatial {
        let mut dot = 0.0f64;
        for ch in 0..c {
            dot += gs[ch * spatial + v].to_f64() * ys[ch * spatial + v].to_f64();
        }
        for ch in 0..c {
            let i = ch * spatial + v;
            os[i] = S::from_f64(ys[i].to_f64() * (gs[i].to_f64() - dot));
        }
    }
    Ok(out)
}

/// Loss value and logit gradient of masked softmax cross entropy.
#[derive(Debug, Clone)]
pub struct CrossEntropy<S: Scalar> {
    /// Mean of `-log p[label]` over non-ignored voxels (0 when all are
    /// ignored).
    pub loss: f64,
    /// `(softmax - onehot) / count` on non-ignored voxels, 0 elsewhere.
    pub grad_logits: Tensor<S>,
    /// Number of voxels that contributed.
    pub count: usize,
}

/// Softmax cross entropy over `logits [C,D,H,W]` against `labels` (one
/// `u8` class id per voxel, row-major over `[D,H,W]`). Voxels with
/// `ignore[v] == true` contribute neither loss nor gradient; all other
/// labels must lie in `[0, C)`.
pub fn cross_entropy_with_grad<S: Scalar>(
    logits: &Tensor<S>,
    labels: &[u8],
    ignore: &[bool],
) -> Result<CrossEntropy<S>> {
    let (c, d, h, w) = logits.dims4("cross_entropy")?;
    let spatial = d * h * w;
    if labels.len() != spatial || ignore.len() != spatial {
        return Err(CoreError::ShapeMismatch {
            op: "cross_entropy",
            detail: format!(
                "labels/ignore length {}/{} vs {spatial} voxels",
                labels.len(),
                ignore.len()
            ),
        });
    }
    let xs = logits.data();
    let mut grad = Tensor::<S>::zeros(logits.shape());
    let count = ignore.iter().filter(|&&m| !m).count();
    if count == 0 {
        return Ok(CrossEntropy {
            loss: 0.0,
            grad_logits: grad,
            count,
        });
    }
    let inv = 1.0 / count as f64;
    let gs = grad.data_mut();
    let mut loss = 0.0f64;
    let mut col = Vec::with_capacity(c);
    for v in 0..spatial {
        if ignore[v] {
            continue;
        }
        let label = labels[v] as usize;
        if label >= c {
            return Err(CoreError::LabelOutOfRange {
                label: labels[v],
                classes: c,
                index: v,
            });
        }
        col.clear();
        let mut max = f64::NEG_INFINITY;
        for ch in 0..c {
            let val = xs[ch * spatial + v].to_f64();
            col.push(val);
            if val > max {
                max = val;
            }
        }
        let mut denom = 0.0f64;
        for e in col.iter_mut() {
            *e = fmath::exp(*e - max);
            denom += *e;
        }
        // -log p[label] = log(sum exp(x - max)) - (x[label] - max)
        loss += fmath::ln(denom) - (xs[label * spatial + v].to_f64() - max);
        for ch in 0..c {
            let p = col[ch] / denom;
            let onehot = if ch == label { 1.0 } else { 0.0 };
            gs[ch * spatial + v] = S::from_f64((p - onehot) * inv);
        }
    }
    Ok(CrossEntropy {
        loss: loss * inv,
        grad_logits: grad,
        count,
    })
}
