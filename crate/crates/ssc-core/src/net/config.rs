//! Architecture hyperparameters and ablation toggles.

use alloc::format;

use crate::error::{CoreError, Result};

/// Everything needed to derive the full set of layers and parameter
/// shapes. Semantic label 0 is the empty class, so the semantic head emits
/// `num_classes + 1` channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    /// Number of object classes N (excluding empty).
    pub num_classes: usize,
    pub stem_channels: usize,
    pub stage_channels: [usize; 3],
    pub blocks_per_stage: [usize; 3],
    /// Dilation rates for the last six residual blocks; earlier blocks use
    /// dilation 1. Ignored (all 1) when `use_dilation` is off.
    pub dilation_schedule: [usize; 6],
    /// Channel reduction of the attention bottleneck.
    pub attention_reduction: usize,
    /// Width of the aggregated feature map.
    pub agg_channels: usize,
    pub use_dilation: bool,
    pub use_feature_agg: bool,
    pub use_ga: bool,
    pub use_condition: bool,
    /// Spatial downsampling between the stem and the residual stages;
    /// 2 or 4 (one or two stride-2 convolutions).
    pub downsample_factor: usize,
    /// Per-channel running-statistic normalization after trunk convs.
    pub normalization: bool,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig {
            num_classes: 11,
            stem_channels: 8,
            stage_channels: [16, 16, 16],
            blocks_per_stage: [2, 2, 2],
            dilation_schedule: [2, 2, 2, 4, 8, 4],
            attention_reduction: 4,
            agg_channels: 32,
            use_dilation: true,
            use_feature_agg: true,
            use_ga: true,
            use_condition: true,
            downsample_factor: 4,
            normalization: false,
        }
    }
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 1 {
            return Err(CoreError::InvalidConfig("num_classes must be >= 1".into()));
        }
        if self.stem_channels < 1 || self.agg_channels < 1 {
            return Err(CoreError::InvalidConfig("channel widths must be >= 1".into()));
        }
        if self.stage_channels.iter().any(|&c| c < 1) {
            return Err(CoreError::InvalidConfig(
                "stage_channels must be >= 1".into(),
            ));
        }
        if self.dilation_schedule.iter().any(|&d| d < 1) {
            return Err(CoreError::InvalidConfig(
                "dilation rates must be >= 1".into(),
            ));
        }
        if !matches!(self.downsample_factor, 2 | 4) {
            return Err(CoreError::InvalidConfig(format!(
                "downsample_factor must be 2 or 4, got {}",
                self.downsample_factor
            )));
        }
        if self.attention_reduction < 1 {
            return Err(CoreError::InvalidConfig(
                "attention_reduction must be >= 1".into(),
            ));
        }
        if self.use_ga {
            let width = self.ga_width();
            if width % self.attention_reduction != 0 {
                return Err(CoreError::InvalidConfig(format!(
                    "attention_reduction {} must divide the attended channel count {width}",
                    self.attention_reduction
                )));
            }
        }
        Ok(())
    }

    /// Channel count of the semantic head output (object classes + empty).
    pub fn sem_channels(&self) -> usize {
        self.num_classes + 1
    }

    /// Channel count the attention gate operates on: the aggregated width
    /// on the full path, the last stage width on the ablation path.
    pub fn ga_width(&self) -> usize {
        if self.use_feature_agg {
            self.agg_channels
        } else {
            self.stage_channels[2]
        }
    }

    pub fn total_blocks(&self) -> usize {
        self.blocks_per_stage.iter().sum()
    }

    /// Dilation of residual block `index` (counting across stages). The
    /// six-entry schedule is aligned to the network's last six blocks.
    pub fn block_dilation(&self, index: usize) -> usize {
        if !self.use_dilation {
            return 1;
        }
        let total = self.total_blocks();
        let sched = &self.dilation_schedule;
        let tail = sched.len().min(total);
        let first_scheduled = total - tail;
        if index < first_scheduled {
            1
        } else {
            sched[sched.len() - tail + (index - first_scheduled)]
        }
    }

    /// Number of stride-2 downsampling convolutions.
    pub fn num_down_convs(&self) -> usize {
        match self.downsample_factor {
            2 => 1,
            _ => 2,
        }
    }

    /// Checks that spatial extents survive the downsampling path.
    pub fn check_input_dims(&self, dims: [usize; 3]) -> Result<()> {
        const AXES: [&str; 3] = ["D", "H", "W"];
        for (axis, &e) in dims.iter().enumerate() {
            if e % self.downsample_factor != 0 || e == 0 {
                return Err(CoreError::ShapeMismatch {
                    op: "forward",
                    detail: format!(
                        "axis {}: extent {e} is not divisible by downsample factor {}",
                        AXES[axis], self.downsample_factor
                    ),
                });
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        NetworkConfig::default().validate().unwrap();
    }

    #[test]
    fn schedule_aligns_to_last_blocks() {
        let cfg = NetworkConfig::default();
        // Six blocks, six entries: 1:1.
        let d: alloc::vec::Vec<usize> = (0..6).map(|i| cfg.block_dilation(i)).collect();
        assert_eq!(d, [2, 2, 2, 4, 8, 4]);

        let mut more = cfg.clone();
        more.blocks_per_stage = [3, 2, 2];
        assert_eq!(more.block_dilation(0), 1);
        assert_eq!(more.block_dilation(1), 2);
        assert_eq!(more.block_dilation(6), 4);

        let mut fewer = cfg.clone();
        fewer.blocks_per_stage = [1, 1, 1];
        let d: alloc::vec::Vec<usize> = (0..3).map(|i| fewer.block_dilation(i)).collect();
        assert_eq!(d, [4, 8, 4]);
    }

    #[test]
    fn dilation_toggle_forces_ones() {
        let mut cfg = NetworkConfig::default();
        cfg.use_dilation = false;
        assert!((0..6).all(|i| cfg.block_dilation(i) == 1));
    }

    #[test]
    fn reduction_must_divide_attended_width() {
        let mut cfg = NetworkConfig::default();
        cfg.attention_reduction = 5;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn indivisible_input_dims_are_rejected() {
        let cfg = NetworkConfig::default();
        assert!(cfg.check_input_dims([32, 16, 32]).is_ok());
        let err = cfg.check_input_dims([32, 18, 32]).unwrap_err();
        let msg = alloc::format!("{err}");
        assert!(msg.contains("axis H"), "got: {msg}");
    }
}
