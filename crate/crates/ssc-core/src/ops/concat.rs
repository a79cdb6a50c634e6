//! Channel concatenation and its slicing backward.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::tensor::{Scalar, Tensor};

/// Stacks tensors along the channel axis; spatial extents must match.
pub fn concat_channels<S: Scalar>(parts: &[&Tensor<S>]) -> Result<Tensor<S>> {
    if parts.is_empty() {
        return Err(CoreError::ShapeMismatch {
            op: "concat_channels",
            detail: "no operands".into(),
        });
    }
    let (_, d, h, w) = parts[0].dims4("concat_channels")?;
    let mut channels = 0usize;
    for p in parts {
        let (c, pd, ph, pw) = p.dims4("concat_channels")?;
        if (pd, ph, pw) != (d, h, w) {
            return Err(CoreError::ShapeMismatch {
                op: "concat_channels",
                detail: format!(
                    "spatial extents differ: [{d},{h},{w}] vs [{pd},{ph},{pw}]"
                ),
            });
        }
        channels += c;
    }
    let mut data = Vec::with_capacity(channels * d * h * w);
    for p in parts {
        data.extend_from_slice(p.data());
    }
    Tensor::from_vec(&[channels, d, h, w], data)
}

/// Slices the gradient back into per-input pieces with the given channel
/// counts.
pub fn concat_channels_backward<S: Scalar>(
    grad: &Tensor<S>,
    part_channels: &[usize],
) -> Result<Vec<Tensor<S>>> {
    let (c, d, h, w) = grad.dims4("concat_channels_backward")?;
    let total: usize = part_channels.iter().sum();
    if total != c {
        return Err(CoreError::ShapeMismatch {
            op: "concat_channels_backward",
            detail: format!("parts sum to {total} channels, grad has {c}"),
        });
    }
    let spatial = d * h * w;
    let mut out = Vec::with_capacity(part_channels.len());
    let mut offset = 0usize;
    for &pc in part_channels {
        let slice = grad.data()[offset * spatial..(offset + pc) * spatial].to_vec();
        out.push(Tensor::from_vec(&[pc, d, h, w], slice)?);
        offset += pc;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn single_argument_is_identity() {
        let x = Tensor::<f32>::filled(&[2, 1, 2, 2], 3.0);
        assert_eq!(concat_channels(&[&x]).unwrap(), x);
    }

    #[test]
    fn channels_land_at_expected_offsets() {
        let a = Tensor::from_vec(&[1, 1, 1, 2], vec![1.0f32, 2.0]).unwrap();
        let b = Tensor::from_vec(&[2, 1, 1, 2], vec![3.0f32, 4.0, 5.0, 6.0]).unwrap();
        let y = concat_channels(&[&a, &b]).unwrap();
        assert_eq!(y.shape(), &[3, 1, 1, 2]);
        assert_eq!(y.data(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
    }

    #[test]
    fn backward_recovers_parts_exactly() {
        let a = Tensor::from_vec(&[1, 1, 1, 2], vec![1.0f64, 2.0]).unwrap();
        let b = Tensor::from_vec(&[2, 1, 1, 2], vec![3.0f64, 4.0, 5.0, 6.0]).unwrap();
        let y = concat_channels(&[&a, &b]).unwrap();
        let parts = concat_channels_backward(&y, &[1, 2]).unwrap();
        assert_eq!(parts[0], a);
        assert_eq!(parts[1], b);
    }

    #[test]
    fn spatial_mismatch_is_rejected() {
        let a = Tensor::<f32>::zeros(&[1, 2, 2, 2]);
        let b = Tensor::<f32>::zeros(&[1, 2, 2, 3]);
        assert!(concat_channels(&[&a, &b]).is_err());
    }
}
