//! Global average pooling over the spatial axes.

use alloc::format;

use crate::error::{CoreError, Result};
use crate::tensor::{Scalar, Tensor};

/// Per-channel mean over all `D*H*W` voxels: `[C,D,H,W] -> [C,1,1,1]`.
pub fn global_avg_pool3d<S: Scalar>(x: &Tensor<S>) -> Result<Tensor<S>> {
    let (c, d, h, w) = x.dims4("global_avg_pool3d")?;
    let spatial = d * h * w;
    let mut out = Tensor::<S>::zeros(&[c, 1, 1, 1]);
    for (ch, o) in out.data_mut().iter_mut().enumerate() {
        let mut acc = 0.0f64;
        for &v in &x.data()[ch * spatial..(ch + 1) * spatial] {
            acc += v.to_f64();
        }
        *o = S::from_f64(acc / spatial as f64);
    }
    Ok(out)
}

/// Spreads `grad [C,1,1,1]` uniformly as `grad / (D*H*W)` over the input.
pub fn global_avg_pool3d_backward<S: Scalar>(
    grad: &Tensor<S>,
    input_shape: &[usize],
) -> Result<Tensor<S>> {
    if input_shape.len() != 4 {
        return Err(CoreError::ShapeMismatch {
            op: "global_avg_pool3d_backward",
            detail: format!("input shape must be rank 4, got {input_shape:?}"),
        });
    }
    let c = input_shape[0];
    if grad.shape() != [c, 1, 1, 1] {
        return Err(CoreError::ShapeMismatch {
            op: "global_avg_pool3d_backward",
            detail: format!("grad: expected [{c},1,1,1], got {:?}", grad.shape()),
        });
    }
    let spatial = input_shape[1] * input_shape[2] * input_shape[3];
    let mut out = Tensor::<S>::zeros(input_shape);
    for (ch, chunk) in out.data_mut().chunks_mut(spatial).enumerate() {
        let g = S::from_f64(grad.data()[ch].to_f64() / spatial as f64);
        chunk.fill(g);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec::Vec;

    #[test]
    fn constant_volume_pools_to_constant() {
        let x = Tensor::<f32>::filled(&[3, 2, 2, 2], 4.25);
        let y = global_avg_pool3d(&x).unwrap();
        assert_eq!(y.shape(), &[3, 1, 1, 1]);
        assert!(y.data().iter().all(|&v| v == 4.25));
    }

    #[test]
    fn ramp_pools_to_arithmetic_mean() {
        let data: Vec<f64> = (0..8).map(|i| i as f64).collect();
        let x = Tensor::from_vec(&[1, 2, 2, 2], data).unwrap();
        assert_eq!(global_avg_pool3d(&x).unwrap().data()[0], 3.5);
    }

    #[test]
    fn backward_spreads_uniformly() {
        let grad = Tensor::<f64>::filled(&[1, 1, 1, 1], 8.0);
        let gx = global_avg_pool3d_backward(&grad, &[1, 2, 2, 2]).unwrap();
        assert!(gx.data().iter().all(|&v| v == 1.0));
    }
}
