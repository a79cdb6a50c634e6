//! Dense row-major tensors and convolution geometry.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};

/// Element type tag, matching the on-disk VXT1 dtype codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32 = 0,
    F64 = 1,
    U8 = 2,
}

/// Scalar element of a [`Tensor`]. All kernels accumulate in `f64`
/// regardless of the storage type, so `f32` mode keeps a deterministic
/// margin against the brute-force oracles and `f64` mode is exact enough
/// for finite-difference gradient checking.
pub trait Scalar:
    Copy + PartialOrd + core::fmt::Debug + core::fmt::Display + Send + Sync + 'static
{
    const DTYPE: Dtype;
    const ZERO: Self;
    const ONE: Self;
    fn from_f64(v: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    const DTYPE: Dtype = Dtype::F32;
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const DTYPE: Dtype = Dtype::F64;
    const ZERO: Self = 0.0;
    const ONE: Self = 1.0;
    #[inline(always)]
    fn from_f64(v: f64) -> Self {
        v
    }
    #[inline(always)]
    fn to_f64(self) -> f64 {
        self
    }
}

/// Dense N-dimensional array, row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<S: Scalar> {
    shape: Vec<usize>,
    data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    /// Zero-filled tensor. Every extent must be at least 1.
    pub fn zeros(shape: &[usize]) -> Self {
        debug_assert!(shape.iter().all(|&e| e >= 1), "extents must be >= 1");
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![S::ZERO; len],
        }
    }

    pub fn filled(shape: &[usize], value: S) -> Self {
        let len = shape.iter().product();
        Tensor {
            shape: shape.to_vec(),
            data: vec![value; len],
        }
    }

    /// Wraps an existing buffer; the length must equal the shape product
    /// and every extent must be at least 1.
    pub fn from_vec(shape: &[usize], data: Vec<S>) -> Result<Self> {
        if shape.iter().any(|&e| e == 0) {
            return Err(CoreError::ShapeMismatch {
                op: "tensor",
                detail: format!("zero extent in shape {shape:?}"),
            });
        }
        let len: usize = shape.iter().product();
        if len != data.len() {
            return Err(CoreError::ShapeMismatch {
                op: "tensor",
                detail: format!(
                    "shape {shape:?} implies {len} elements, buffer has {}",
                    data.len()
                ),
            });
        }
        Ok(Tensor {
            shape: shape.to_vec(),
            data,
        })
    }

    #[inline]
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    #[inline]
    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[S] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [S] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<S> {
        self.data
    }

    /// Row-major offset of a multi-index.
    #[inline]
    pub fn offset(&self, index: &[usize]) -> usize {
        debug_assert_eq!(index.len(), self.shape.len());
        let mut off = 0;
        for (i, &ix) in index.iter().enumerate() {
            debug_assert!(ix < self.shape[i]);
            off = off * self.shape[i] + ix;
        }
        off
    }

    /// Inverse of [`offset`](Self::offset).
    pub fn index(&self, mut offset: usize) -> Vec<usize> {
        debug_assert!(offset < self.data.len());
        let mut idx = vec![0usize; self.shape.len()];
        for i in (0..self.shape.len()).rev() {
            idx[i] = offset % self.shape[i];
            offset /= self.shape[i];
        }
        idx
    }

    #[inline]
    pub fn at(&self, index: &[usize]) -> S {
        self.data[self.offset(index)]
    }

    #[inline]
    pub fn at_mut(&mut self, index: &[usize]) -> &mut S {
        let off = self.offset(index);
        &mut self.data[off]
    }

    /// Interprets the tensor as `[C, D, H, W]` and returns the extents.
    pub fn dims4(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        if self.shape.len() != 4 {
            return Err(CoreError::ShapeMismatch {
                op,
                detail: format!("expected rank-4 [C,D,H,W] tensor, got shape {:?}", self.shape),
            });
        }
        Ok((self.shape[0], self.shape[1], self.shape[2], self.shape[3]))
    }

    /// Elementwise conversion to another scalar type.
    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|v| T::from_f64(v.to_f64())).collect(),
        }
    }

    pub fn map(&self, f: impl Fn(S) -> S) -> Tensor<S> {
        Tensor {
            shape: self.shape.clone(),
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Strict shape equality check used by binary kernels.
    pub fn check_same_shape(&self, other: &Tensor<S>, op: &'static str) -> Result<()> {
        if self.shape != other.shape {
            return Err(CoreError::ShapeMismatch {
                op,
                detail: format!("operand shapes {:?} vs {:?}", self.shape, other.shape),
            });
        }
        Ok(())
    }
}

/// Geometry of one 3D convolution: kernel, stride, dilation and zero
/// padding per spatial axis plus the channel counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvSpec {
    pub kernel: [usize; 3],
    pub stride: [usize; 3],
    pub dilation: [usize; 3],
    pub padding: [usize; 3],
    pub in_channels: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    /// Isotropic convolution, the only kind the network uses.
    pub fn isotropic(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        dilation: usize,
        padding: usize,
    ) -> Self {
        ConvSpec {
            kernel: [kernel; 3],
            stride: [stride; 3],
            dilation: [dilation; 3],
            padding: [padding; 3],
            in_channels,
            out_channels,
        }
    }

    pub fn validate(&self) -> Result<()> {
        for axis in 0..3 {
            if self.kernel[axis] == 0 || self.stride[axis] == 0 || self.dilation[axis] == 0 {
                return Err(CoreError::InvalidConfig(format!(
                    "conv kernel/stride/dilation must be >= 1 on axis {axis}"
                )));
            }
        }
        if self.in_channels == 0 || self.out_channels == 0 {
            return Err(CoreError::InvalidConfig(
                "conv channel counts must be >= 1".into(),
            ));
        }
        Ok(())
    }

    /// Output extent along one axis:
    /// `floor((in + 2p - d*(k-1) - 1)/s) + 1`.
    pub fn out_extent(&self, axis: usize, input: usize) -> Result<usize> {
        let k = self.kernel[axis];
        let s = self.stride[axis];
        let d = self.dilation[axis];
        let p = self.padding[axis];
        let span = d * (k - 1) + 1;
        let padded = input + 2 * p;
        if padded < span {
            return Err(CoreError::ShapeMismatch {
                op: "conv3d",
                detail: format!(
                    "axis {axis}: input {input} + 2*{p} padding is smaller than kernel span {span}"
                ),
            });
        }
        Ok((padded - span) / s + 1)
    }

    pub fn out_dims(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        Ok([
            self.out_extent(0, input[0])?,
            self.out_extent(1, input[1])?,
            self.out_extent(2, input[2])?,
        ])
    }

    /// Shape of the weight tensor, `[K, C, kd, kh, kw]`.
    pub fn weight_shape(&self) -> [usize; 5] {
        [
            self.out_channels,
            self.in_channels,
            self.kernel[0],
            self.kernel[1],
            self.kernel[2],
        ]
    }

    pub fn param_count(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel[0] * self.kernel[1] * self.kernel[2]
            + self.out_channels
    }
}
