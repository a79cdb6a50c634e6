//! IO formats, configuration files, the training loop, and the benchmark
//! harness behind the `sscnet` binary.

pub mod bench;
pub mod checkpoint;
pub mod config;
pub mod dataset;
pub mod eval;
pub mod pgm;
pub mod train_loop;
pub mod vxt;
