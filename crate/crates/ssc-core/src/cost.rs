//! Analytic parameter and FLOP accounting.
//!
//! MACs follow the profiler convention: a convolution costs
//! `output_voxels * Cout * Cin * kd*kh*kw` (zero-padded taps included);
//! pooling, upsampling and elementwise ops cost one op per element.
//! FLOPs are exactly `2 * MACs` everywhere so the two totals stay
//! consistent.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::Result;
use crate::net::{plan_ops, NetworkConfig};

/// Cost of one forward-pass operation.
#[derive(Debug, Clone)]
pub struct LayerCost {
    pub name: String,
    pub macs: u64,
    pub flops: u64,
    pub params: u64,
    pub out_elements: u64,
}

/// Wall-clock statistics attached by the benchmark harness.
#[derive(Debug, Clone, PartialEq)]
pub struct LatencyStats {
    pub mean_s: f64,
    pub p50_s: f64,
    pub p95_s: f64,
    /// `1 / mean_s`.
    pub fps: f64,
    pub iters: usize,
    pub warmup: usize,
    pub threads: usize,
    /// "f32" or "f64".
    pub precision: &'static str,
}

/// Per-layer and total costs, plus measured latency when benchmarked.
#[derive(Debug, Clone)]
pub struct CostReport {
    pub input_dims: [usize; 3],
    pub layers: Vec<LayerCost>,
    pub total_params: u64,
    pub total_macs: u64,
    pub total_flops: u64,
    pub latency: Option<LatencyStats>,
}

/// Exact parameter count of the architecture, computed from layer shapes
/// alone (no tensors are instantiated).
pub fn count_params(config: &NetworkConfig) -> Result<u64> {
    Ok(crate::net::plan_ops(config, [config.downsample_factor; 3])?
        .iter()
        .map(|op| op.params)
        .sum())
}

/// Analytic cost of one forward pass on the given input extents.
pub fn count_flops(config: &NetworkConfig, dims: [usize; 3]) -> Result<CostReport> {
    let ops = plan_ops(config, dims)?;
    let layers: Vec<LayerCost> = ops
        .iter()
        .map(|op| LayerCost {
            name: op.name.clone(),
            macs: op.macs,
            flops: 2 * op.macs,
            params: op.params,
            out_elements: op.out_elements,
        })
        .collect();
    let total_params = layers.iter().map(|l| l.params).sum();
    let total_macs = layers.iter().map(|l| l.macs).sum();
    Ok(CostReport {
        input_dims: dims,
        layers,
        total_params,
        total_macs,
        total_flops: 2 * total_macs,
        latency: None,
    })
}

impl CostReport {
    /// Fixed-width table plus totals and, when measured, latency lines.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "input dims {}x{}x{}\n",
            self.input_dims[0], self.input_dims[1], self.input_dims[2]
        ));
        out.push_str(&format!(
            "{:<24} {:>14} {:>14} {:>10}\n",
            "layer", "MACs", "FLOPs", "params"
        ));
        for l in &self.layers {
            out.push_str(&format!(
                "{:<24} {:>14} {:>14} {:>10}\n",
                l.name, l.macs, l.flops, l.params
            ));
        }
        out.push_str(&format!(
            "total params {} ({:.1} k)\n",
            self.total_params,
            self.total_params as f64 / 1e3
        ));
        out.push_str(&format!(
            "total MACs {} ({:.4} G)\ntotal FLOPs {} ({:.4} G)\n",
            self.total_macs,
            self.total_macs as f64 / 1e9,
            self.total_flops,
            self.total_flops as f64 / 1e9
        ));
        if let Some(lat) = &self.latency {
            out.push_str(&format!(
                "latency mean {:.4} ms  p50 {:.4} ms  p95 {:.4} ms\n",
                lat.mean_s * 1e3,
                lat.p50_s * 1e3,
                lat.p95_s * 1e3
            ));
            out.push_str(&format!(
                "throughput {:.2} volumes/s ({} iters, {} warmup, {} thread(s), {})\n",
                lat.fps, lat.iters, lat.warmup, lat.threads, lat.precision
            ));
        }
        out
    }

    /// `layer,macs,flops,params` rows plus summary rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,macs,flops,params\n");
        for l in &self.layers {
            out.push_str(&format!("{},{},{},{}\n", l.name, l.macs, l.flops, l.params));
        }
        out.push_str(&format!("total,{},{},{}\n", self.total_macs, self.total_flops, self.total_params));
        if let Some(lat) = &self.latency {
            out.push_str(&format!(
                "latency_mean_s,{:.9},,\nlatency_p50_s,{:.9},,\nlatency_p95_s,{:.9},,\nfps,{:.4},,\n",
                lat.mean_s, lat.p50_s, lat.p95_s, lat.fps
            ));
        }
        out
    }
}
