//! Forward and backward kernels for every primitive the network needs.
//!
//! All kernels accumulate in `f64` and fix the accumulation order per
//! output element, so runs are bit-identical across thread counts.

mod concat;
mod conv;
mod pointwise;
mod pool;
mod softmax;
mod upsample;

pub use concat::{concat_channels, concat_channels_backward};
pub use conv::{conv3d, conv3d_backward, ConvGrads};
pub use pointwise::{
    add, relu, relu_backward, scale_per_channel, scale_per_channel_backward, sigmoid,
    sigmoid_backward,
};
pub use pool::{global_avg_pool3d, global_avg_pool3d_backward};
pub use softmax::{cross_entropy_with_grad, softmax_backward, softmax_channels, CrossEntropy};
pub use upsample::{upsample3d, upsample3d_backward};

/// Runs `body(i, chunk)` over `data` split into equally sized chunks,
/// in parallel when the `parallel` feature is active. Each chunk is an
/// independent output region, so the split never changes results.
pub(crate) fn for_each_chunk_mut<T: Send>(
    data: &mut [T],
    chunk: usize,
    body: impl Fn(usize, &mut [T]) + Send + Sync,
) {
    debug_assert!(chunk > 0 && data.len() % chunk == 0);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        data.par_chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| body(i, c));
    }
    #[cfg(not(feature = "parallel"))]
    {
        data.chunks_mut(chunk)
            .enumerate()
            .for_each(|(i, c)| body(i, c));
    }
}
