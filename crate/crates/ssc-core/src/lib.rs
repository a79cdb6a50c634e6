//! Core engine for voxel-based semantic scene completion.
//!
//! Everything in this crate is pure computation on owned buffers: dense
//! tensors and their forward/backward kernels, the completion network
//! itself, TSDF voxelization of depth images, synthetic scene generation,
//! evaluation metrics, the optimizer, and analytic cost accounting. File
//! formats, the CLI, and wall-clock benchmarking live in the companion
//! `ssc-cli` crate.
//!
//! The crate is `no_std`-compatible (with `alloc`); the default `std`
//! feature enables platform float intrinsics and the optional `parallel`
//! feature adds rayon-based kernels. Results are bit-identical across
//! thread counts: parallel loops are gather-only, so every output element
//! is accumulated in the same order regardless of how work is split.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod cost;
pub mod error;
pub(crate) mod fmath;
pub mod gradcheck;
pub mod metrics;
pub mod net;
pub mod ops;
pub mod optim;
pub mod tensor;
pub mod voxel;

pub use error::{CoreError, Result};
pub use tensor::{ConvSpec, Dtype, Scalar, Tensor};
