//! Dataset-level evaluation: count accumulation across scenes
//! (micro-averaged), with predictions from either the semantic head
//! (default) or the occupancy head.

use anyhow::Result;
use ssc_core::metrics::{argmax_labels, sc_counts, ssc_counts, BinaryCounts, MetricsReport};
use ssc_core::net::{forward, NetworkConfig, NormState, ParameterSet};
use ssc_core::voxel::{LabelVolume, SceneSample};

/// Which logit volume supplies the binary occupancy prediction for the
/// SC task.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScSource {
    /// Argmax of the semantic head; non-empty means occupied. Comparable
    /// across the condition ablation.
    SemanticHead,
    /// Argmax of the two-channel occupancy head.
    OccupancyHead,
}

/// Runs the network on every sample and micro-averages the confusion
/// counts over the whole set.
pub fn evaluate_samples(
    params: &ParameterSet<f32>,
    config: &NetworkConfig,
    norm: Option<&NormState>,
    samples: &[SceneSample],
    sc_source: ScSource,
) -> Result<MetricsReport> {
    let mut sc = BinaryCounts::default();
    let mut per_class = [(0u64, 0u64, 0u64); 256];
    let mut ssc_region = 0u64;
    for sample in samples {
        let input = sample.tsdf.to_tensor::<f32>();
        let out = forward(&input, params, config, norm, false)?;
        let grid = &sample.labels.grid;
        let pred = argmax_labels(&out.sem_logits, grid)?;
        let sc_pred: LabelVolume = match sc_source {
            ScSource::SemanticHead => pred.clone(),
            ScSource::OccupancyHead => argmax_labels(&out.occ_logits, grid)?,
        };
        let counts = sc_counts(&sc_pred, &sample.labels, &sample.visibility)?;
        sc.tp += counts.tp;
        sc.fp += counts.fp;
        sc.fn_ += counts.fn_;
        sc.region += counts.region;
        let (classes, region) = ssc_counts(&pred, &sample.labels, &sample.visibility)?;
        ssc_region += region;
        for (c, tp, fp, fn_) in classes {
            let slot = &mut per_class[c as usize];
            slot.0 += tp;
            slot.1 += fp;
            slot.2 += fn_;
        }
    }
    let (sc_precision, sc_recall, sc_iou) = sc.rates();
    let class_iou: Vec<(u8, f64)> = per_class
        .iter()
        .enumerate()
        .filter(|&(c, &(tp, fp, fn_))| c >= 1 && c < 255 && tp + fp + fn_ > 0)
        .map(|(c, &(tp, fp, fn_))| (c as u8, tp as f64 / (tp + fp + fn_) as f64))
        .collect();
    let ssc_miou = if class_iou.is_empty() {
        1.0
    } else {
        class_iou.iter().map(|&(_, iou)| iou).sum::<f64>() / class_iou.len() as f64
    };
    Ok(MetricsReport {
        sc_precision,
        sc_recall,
        sc_iou,
        class_iou,
        ssc_miou,
        sc_region_voxels: sc.region,
        ssc_region_voxels: ssc_region,
    })
}
