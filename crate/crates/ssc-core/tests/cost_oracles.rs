//! Cost accounting against an instrumented forward pass.
//!
//! The oracle re-walks the architecture with the naive convolution
//! kernel, counting one MAC per logical multiply-accumulate (padding
//! taps included) and one op per element for the cheap layers. Because
//! the naive kernel accumulates in the same per-voxel order as the
//! library kernel, the oracle's outputs must also be bit-identical to
//! `net::forward`, which pins the op plan to the real dataflow.

mod common;

use common::*;
use ssc_core::cost::{count_flops, count_params};
use ssc_core::net::{forward, init_params, NetworkConfig, ParameterSet};
use ssc_core::ops;
use ssc_core::{ConvSpec, Tensor};

fn config_matrix() -> Vec<NetworkConfig> {
    let base = NetworkConfig {
        num_classes: 4,
        stem_channels: 4,
        stage_channels: [8, 8, 8],
        blocks_per_stage: [2, 2, 2],
        attention_reduction: 4,
        agg_channels: 8,
        ..NetworkConfig::default()
    };
    vec![
        base.clone(),
        NetworkConfig {
            use_dilation: false,
            ..base.clone()
        },
        NetworkConfig {
            use_feature_agg: false,
            ..base.clone()
        },
        NetworkConfig {
            use_ga: false,
            use_condition: false,
            ..base.clone()
        },
        NetworkConfig {
            downsample_factor: 2,
            stage_channels: [4, 8, 8],
            blocks_per_stage: [1, 2, 1],
            ..base.clone()
        },
        NetworkConfig::default(),
    ]
}

#[test]
fn analytic_flops_equal_the_instrumented_mac_counter() {
    let dims = [8usize, 8, 8];
    for (i, cfg) in config_matrix().iter().enumerate() {
        let params = init_params::<f64>(cfg, 7 + i as u64).unwrap();
        let mut r = rng(i as u64);
        let input = rand_tensor(&mut r, &[1, dims[0], dims[1], dims[2]], 1.0);
        let (occ, sem, macs) = instrumented_forward(cfg, &params, &input);

        // The op plan names and MAC counts must match the measurement
        // layer by layer and in total.
        let report = count_flops(cfg, dims).unwrap();
        let mut measured_total = 0u64;
        for layer in &report.layers {
            let measured = macs
                .get(&layer.name)
                .unwrap_or_else(|| panic!("config {i}: no measurement for {}", layer.name));
            assert_eq!(*measured, layer.macs, "config {i}, layer {}", layer.name);
            measured_total += measured;
        }
        assert_eq!(macs.len(), report.layers.len(), "config {i}");
        assert_eq!(measured_total, report.total_macs, "config {i}");
        assert_eq!(report.total_flops, 2 * report.total_macs);

        // The instrumented walk is also a full forward oracle: outputs
        // must be bit-identical to the library's forward pass.
        let out = forward(&input, &params, cfg, None, false).unwrap();
        assert_eq!(out.occ_logits, occ, "config {i}");
        assert_eq!(out.sem_logits, sem, "config {i}");
    }
}

#[test]
fn analytic_params_equal_instantiated_totals_for_the_matrix() {
    for (i, cfg) in config_matrix().iter().enumerate() {
        let params = init_params::<f32>(cfg, 11).unwrap();
        assert_eq!(
            count_params(cfg).unwrap(),
            params.total_elements(),
            "config {i}"
        );
    }
}

#[test]
fn cost_report_is_a_deterministic_function_of_config_and_dims() {
    let cfg = NetworkConfig::default();
    let a = count_flops(&cfg, [16, 8, 16]).unwrap();
    let b = count_flops(&cfg, [16, 8, 16]).unwrap();
    assert_eq!(a.total_macs, b.total_macs);
    assert_eq!(a.to_csv(), b.to_csv());
}
