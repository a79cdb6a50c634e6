//! Wall-clock inference benchmarking on a fixed random input.

use std::time::Instant;

use anyhow::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ssc_core::cost::{count_flops, CostReport, LatencyStats};
use ssc_core::net::{forward, init_params, NetworkConfig};
use ssc_core::{Scalar, Tensor};

/// Nearest-rank percentile of a sorted latency list.
fn percentile(sorted: &[f64], p: f64) -> f64 {
    let rank = ((p * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[rank - 1]
}

fn run_timed<S: Scalar>(
    config: &NetworkConfig,
    dims: [usize; 3],
    warmup: usize,
    iters: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let params = init_params::<S>(config, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let voxels = dims[0] * dims[1] * dims[2];
    let data: Vec<S> = (0..voxels)
        .map(|_| S::from_f64(rng.gen_range(-1.0..1.0)))
        .collect();
    let input = Tensor::from_vec(&[1, dims[0], dims[1], dims[2]], data)?;
    for _ in 0..warmup {
        let out = forward(&input, &params, config, None, false)?;
        std::hint::black_box(out.sem_logits);
    }
    let mut latencies = Vec::with_capacity(iters);
    for _ in 0..iters {
        let t0 = Instant::now();
        let out = forward(&input, &params, config, None, false)?;
        std::hint::black_box(out.sem_logits);
        latencies.push(t0.elapsed().as_secs_f64());
    }
    Ok(latencies)
}

/// Repeated forward passes after warmup; the analytic cost table is
/// attached alongside the measured latency statistics.
pub fn bench_inference(
    config: &NetworkConfig,
    dims: [usize; 3],
    warmup: usize,
    iters: usize,
    threads: usize,
    use_f64: bool,
    seed: u64,
) -> Result<CostReport> {
    anyhow::ensure!(iters >= 1, "iters must be >= 1");
    let latencies = if use_f64 {
        run_timed::<f64>(config, dims, warmup, iters, seed)?
    } else {
        run_timed::<f32>(config, dims, warmup, iters, seed)?
    };
    let mut sorted = latencies.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mean = latencies.iter().sum::<f64>() / latencies.len() as f64;
    let mut report = count_flops(config, dims)?;
    report.latency = Some(LatencyStats {
        mean_s: mean,
        p50_s: percentile(&sorted, 0.50),
        p95_s: percentile(&sorted, 0.95),
        fps: 1.0 / mean,
        iters,
        warmup,
        threads,
        precision: if use_f64 { "f64" } else { "f32" },
    });
    Ok(report)
}
