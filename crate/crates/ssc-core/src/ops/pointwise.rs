//! Elementwise primitives: relu, sigmoid, add, per-channel scaling.

use alloc::format;

use crate::error::{CoreError, Result};
use crate::fmath;
use crate::tensor::{Scalar, Tensor};

pub fn relu<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(|v| if v > S::ZERO { v } else { S::ZERO })
}

/// `pre` is the activation input; gradient is passed where `pre > 0`.
pub fn relu_backward<S: Scalar>(grad: &Tensor<S>, pre: &Tensor<S>) -> Result<Tensor<S>> {
    grad.check_same_shape(pre, "relu_backward")?;
    let mut out = grad.clone();
    for (g, &p) in out.data_mut().iter_mut().zip(pre.data()) {
        if p <= S::ZERO {
            *g = S::ZERO;
        }
    }
    Ok(out)
}

pub fn sigmoid<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    x.map(|v| S::from_f64(1.0 / (1.0 + fmath::exp(-v.to_f64()))))
}

/// `y` is the sigmoid output; derivative is `y * (1 - y)`.
pub fn sigmoid_backward<S: Scalar>(grad: &Tensor<S>, y: &Tensor<S>) -> Result<Tensor<S>> {
    grad.check_same_shape(y, "sigmoid_backward")?;
    let mut out = grad.clone();
    for (g, &yv) in out.data_mut().iter_mut().zip(y.data()) {
        let y64 = yv.to_f64();
        *g = S::from_f64(g.to_f64() * y64 * (1.0 - y64));
    }
    Ok(out)
}

/// Elementwise sum. Both input gradients equal the output gradient, so no
/// backward function is needed.
pub fn add<S: Scalar>(a: &Tensor<S>, b: &Tensor<S>) -> Result<Tensor<S>> {
    a.check_same_shape(b, "add")?;
    let mut out = a.clone();
    for (o, &bv) in out.data_mut().iter_mut().zip(b.data()) {
        *o = S::from_f64(o.to_f64() + bv.to_f64());
    }
    Ok(out)
}

/// Multiplies each channel of `x [C,D,H,W]` by `scale[c]`.
pub fn scale_per_channel<S: Scalar>(x: &Tensor<S>, scale: &Tensor<S>) -> Result<Tensor<S>> {
    let (c, d, h, w) = x.dims4("scale_per_channel")?;
    if scale.shape() != [c] {
        return Err(CoreError::ShapeMismatch {
            op: "scale_per_channel",
            detail: format!("scale: expected [{c}], got {:?}", scale.shape()),
        });
    }
    let spatial = d * h * w;
    let mut out = x.clone();
    for (ch, chunk) in out.data_mut().chunks_mut(spatial).enumerate() {
        let s = scale.data()[ch].to_f64();
        for v in chunk {
            *v = S::from_f64(v.to_f64() * s);
        }
    }
    Ok(out)
}

/// Returns `(grad_x, grad_scale)`.
pub fn scale_per_channel_backward<S: Scalar>(
    grad: &Tensor<S>,
    x: &Tensor<S>,
    scale: &Tensor<S>,
) -> Result<(Tensor<S>, Tensor<S>)> {
    grad.check_same_shape(x, "scale_per_channel_backward")?;
    let (c, d, h, w) = x.dims4("scale_per_channel_backward")?;
    if scale.shape() != [c] {
        return Err(CoreError::ShapeMismatch {
            op: "scale_per_channel_backward",
            detail: format!("scale: expected [{c}], got {:?}", scale.shape()),
        });
    }
    let spatial = d * h * w;
    let mut grad_x = grad.clone();
    let mut grad_scale = Tensor::<S>::zeros(&[c]);
    for ch in 0..c {
        let s = scale.data()[ch].to_f64();
        let mut acc = 0.0f64;
        for i in ch * spatial..(ch + 1) * spatial {
            acc += grad.data()[i].to_f64() * x.data()[i].to_f64();
            grad_x.data_mut()[i] = S::from_f64(grad.data()[i].to_f64() * s);
        }
        grad_scale.data_mut()[ch] = S::from_f64(acc);
    }
    Ok((grad_x, grad_scale))
}
