//! Analytic receptive field of the encoder.

use super::config::NetworkConfig;
use super::plan::layers_of;
use crate::error::Result;
use crate::tensor::ConvSpec;

fn encoder_specs(config: &NetworkConfig) -> Result<alloc::vec::Vec<ConvSpec>> {
    Ok(layers_of(config)?
        .into_iter()
        .filter(|l| {
            l.name.starts_with("stem.") || l.name.starts_with("down.") || l.name.starts_with("stage")
        })
        .map(|l| l.spec)
        .collect())
}

/// Input-index interval `[lo, hi]` (per axis, possibly outside the
/// volume) that a single voxel of the deepest encoder output at
/// `out_index` depends on. Walks the conv stack in reverse:
/// `[lo, hi] -> [lo*s - p, hi*s - p + d*(k-1)]`.
pub fn encoder_input_interval(
    config: &NetworkConfig,
    out_index: [usize; 3],
) -> Result<[(i64, i64); 3]> {
    let specs = encoder_specs(config)?;
    let mut interval = [
        (out_index[0] as i64, out_index[0] as i64),
        (out_index[1] as i64, out_index[1] as i64),
        (out_index[2] as i64, out_index[2] as i64),
    ];
    for spec in specs.iter().rev() {
        for axis in 0..3 {
            let (lo, hi) = interval[axis];
            let s = spec.stride[axis] as i64;
            let p = spec.padding[axis] as i64;
            let span = (spec.dilation[axis] * (spec.kernel[axis] - 1)) as i64;
            interval[axis] = (lo * s - p, hi * s - p + span);
        }
    }
    Ok(interval)
}

/// Receptive field of one voxel of the deepest encoder features, in input
/// voxels per axis. This is the quantity the dilation schedule enlarges;
/// the aggregation and attention branches can only widen dependence
/// further (global pooling touches the whole volume).
pub fn receptive_field(config: &NetworkConfig) -> Result<[usize; 3]> {
    let interval = encoder_input_interval(config, [0, 0, 0])?;
    Ok([
        (interval[0].1 - interval[0].0 + 1) as usize,
        (interval[1].1 - interval[1].0 + 1) as usize,
        (interval[2].1 - interval[2].0 + 1) as usize,
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Measure against the forward accumulation law
    /// `rf += s_eff * (k - 1) * d` with `s_eff` the product of preceding
    /// strides.
    fn forward_accumulated_rf(config: &NetworkConfig) -> usize {
        let specs = encoder_specs(config).unwrap();
        let mut rf = 1usize;
        let mut s_eff = 1usize;
        for spec in &specs {
            rf += s_eff * (spec.kernel[0] - 1) * spec.dilation[0];
            s_eff *= spec.stride[0];
        }
        rf
    }

    fn stem_only() -> NetworkConfig {
        NetworkConfig {
            blocks_per_stage: [0, 0, 0],
            downsample_factor: 2,
            ..NetworkConfig::default()
        }
    }

    #[test]
    fn single_conv_rf_is_kernel_span() {
        // Encoder with only the two stem convs and one down conv:
        // rf = 1 + 2 + 2 + 2*1 = 7.
        let cfg = stem_only();
        assert_eq!(receptive_field(&cfg).unwrap(), [7, 7, 7]);
    }

    #[test]
    fn dilation_widens_one_conv_to_k_plus_k_minus_1_d_minus_1() {
        // One k=3 conv at dilation 8 spans 3 + 2*7 = 17.
        let spec = ConvSpec::isotropic(1, 1, 3, 1, 8, 8);
        let span = spec.dilation[0] * (spec.kernel[0] - 1) + 1;
        assert_eq!(span, 17);
    }

    #[test]
    fn interval_matches_forward_accumulation() {
        for cfg in [
            NetworkConfig::default(),
            NetworkConfig {
                use_dilation: false,
                ..NetworkConfig::default()
            },
            NetworkConfig {
                downsample_factor: 2,
                blocks_per_stage: [1, 1, 1],
                ..NetworkConfig::default()
            },
        ] {
            assert_eq!(receptive_field(&cfg).unwrap()[0], forward_accumulated_rf(&cfg));
        }
    }

    #[test]
    fn larger_dilations_never_shrink_the_field() {
        let base = NetworkConfig {
            dilation_schedule: [1, 1, 1, 1, 1, 1],
            ..NetworkConfig::default()
        };
        let table = NetworkConfig::default();
        let rf_base = receptive_field(&base).unwrap();
        let rf_table = receptive_field(&table).unwrap();
        for axis in 0..3 {
            assert!(rf_table[axis] > rf_base[axis]);
        }
    }
}
