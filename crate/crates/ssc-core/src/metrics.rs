//! Scene completion (SC) and semantic scene completion (SSC) evaluation.
//!
//! SC is binary occupancy on occluded voxels; SSC is per-class IoU over
//! all in-frustum voxels. Both restrict to voxels with ground-truth
//! labels. Counting is integer-exact.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::tensor::{Scalar, Tensor};
use crate::voxel::{LabelVolume, VisibilityVolume, VoxelState, UNLABELED};

/// SC and SSC scores plus the region sizes they were computed on.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub sc_precision: f64,
    pub sc_recall: f64,
    pub sc_iou: f64,
    /// `(class, IoU)` for every class present in ground truth or
    /// prediction within the SSC region, ascending by class id.
    pub class_iou: Vec<(u8, f64)>,
    /// Mean of `class_iou` (1.0 when no class is present at all).
    pub ssc_miou: f64,
    /// Labeled occluded voxels (the SC region).
    pub sc_region_voxels: u64,
    /// Labeled in-frustum voxels (the SSC region).
    pub ssc_region_voxels: u64,
}

/// Integer confusion counts for one binary task.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct BinaryCounts {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub region: u64,
}

impl BinaryCounts {
    /// Precision/recall/IoU with the 0/0 conventions: a region with no
    /// positives on either side scores 1 everywhere (the prediction is
    /// trivially perfect); any other zero denominator scores 0.
    pub fn rates(&self) -> (f64, f64, f64) {
        if self.tp + self.fp + self.fn_ == 0 {
            return (1.0, 1.0, 1.0);
        }
        let precision = if self.tp + self.fp > 0 {
            self.tp as f64 / (self.tp + self.fp) as f64
        } else {
            0.0
        };
        let recall = if self.tp + self.fn_ > 0 {
            self.tp as f64 / (self.tp + self.fn_) as f64
        } else {
            0.0
        };
        let iou = self.tp as f64 / (self.tp + self.fp + self.fn_) as f64;
        (precision, recall, iou)
    }
}

fn check_grids(
    pred: &LabelVolume,
    gt: &LabelVolume,
    visibility: &VisibilityVolume,
) -> Result<()> {
    pred.grid.check_same(&gt.grid, "metrics")?;
    pred.grid.check_same(&visibility.grid, "metrics")
}

/// Binary occupancy counts over labeled occluded voxels; a voxel is
/// positive when its label is non-empty.
pub fn sc_counts(
    pred: &LabelVolume,
    gt: &LabelVolume,
    visibility: &VisibilityVolume,
) -> Result<BinaryCounts> {
    check_grids(pred, gt, visibility)?;
    let mut counts = BinaryCounts::default();
    for ((&p, &g), &s) in pred
        .labels()
        .iter()
        .zip(gt.labels())
        .zip(visibility.states())
    {
        if s != VoxelState::Occluded || g == UNLABELED {
            continue;
        }
        counts.region += 1;
        let pp = p != 0;
        let gp = g != 0;
        match (pp, gp) {
            (true, true) => counts.tp += 1,
            (true, false) => counts.fp += 1,
            (false, true) => counts.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(counts)
}

/// `(precision, recall, IoU)` of the scene-completion task.
pub fn sc_metrics(
    pred: &LabelVolume,
    gt: &LabelVolume,
    visibility: &VisibilityVolume,
) -> Result<(f64, f64, f64)> {
    Ok(sc_counts(pred, gt, visibility)?.rates())
}

/// Per-class `(class, TP, FP, FN)` over labeled in-frustum voxels
/// (observed-free, observed-surface and occluded states), for every
/// object class present in ground truth or prediction. The empty class is
/// not scored.
pub fn ssc_counts(
    pred: &LabelVolume,
    gt: &LabelVolume,
    visibility: &VisibilityVolume,
) -> Result<(Vec<(u8, u64, u64, u64)>, u64)> {
    check_grids(pred, gt, visibility)?;
    let mut tp = [0u64; 256];
    let mut fp = [0u64; 256];
    let mut fn_ = [0u64; 256];
    let mut region = 0u64;
    for ((&p, &g), &s) in pred
        .labels()
        .iter()
        .zip(gt.labels())
        .zip(visibility.states())
    {
        if s == VoxelState::OutsideFrustum || g == UNLABELED {
            continue;
        }
        region += 1;
        if p == g {
            tp[p as usize] += 1;
        } else {
            fp[p as usize] += 1;
            fn_[g as usize] += 1;
        }
    }
    let mut per_class = Vec::new();
    for c in 1..UNLABELED as usize {
        if tp[c] + fp[c] + fn_[c] > 0 {
            per_class.push((c as u8, tp[c], fp[c], fn_[c]));
        }
    }
    Ok((per_class, region))
}

/// Per-class IoU and their mean. Classes absent from both volumes within
/// the region are excluded from the mean.
pub fn ssc_metrics(
    pred: &LabelVolume,
    gt: &LabelVolume,
    visibility: &VisibilityVolume,
) -> Result<(Vec<(u8, f64)>, f64)> {
    let (counts, _) = ssc_counts(pred, gt, visibility)?;
    let class_iou: Vec<(u8, f64)> = counts
        .iter()
        .map(|&(c, tp, fp, fn_)| (c, tp as f64 / (tp + fp + fn_) as f64))
        .collect();
    let miou = if class_iou.is_empty() {
        1.0
    } else {
        class_iou.iter().map(|&(_, iou)| iou).sum::<f64>() / class_iou.len() as f64
    };
    Ok((class_iou, miou))
}

/// Full evaluation of one prediction volume.
pub fn evaluate(
    pred: &LabelVolume,
    gt: &LabelVolume,
    visibility: &VisibilityVolume,
) -> Result<MetricsReport> {
    let sc = sc_counts(pred, gt, visibility)?;
    let (sc_precision, sc_recall, sc_iou) = sc.rates();
    let (class_iou, ssc_miou) = ssc_metrics(pred, gt, visibility)?;
    let (_, ssc_region) = ssc_counts(pred, gt, visibility)?;
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

/// Argmax over the channel axis of a logit volume, as a label volume on
/// `grid`. Ties break toward the lowest class index.
pub fn argmax_labels<S: Scalar>(
    logits: &Tensor<S>,
    grid: &crate::voxel::VoxelGridSpec,
) -> Result<LabelVolume> {
    let (c, d, h, w) = logits.dims4("argmax_labels")?;
    if [d, h, w] != grid.dims {
        return Err(CoreError::ShapeMismatch {
            op: "argmax_labels",
            detail: format!("logits spatial {:?} vs grid {:?}", [d, h, w], grid.dims),
        });
    }
    if c > UNLABELED as usize {
        return Err(CoreError::InvalidConfig(format!(
            "{c} channels exceed the label range"
        )));
    }
    let spatial = d * h * w;
    let xs = logits.data();
    let mut labels = Vec::with_capacity(spatial);
    for v in 0..spatial {
        let mut best = 0usize;
        let mut best_val = xs[v].to_f64();
        for ch in 1..c {
            let val = xs[ch * spatial + v].to_f64();
            if val > best_val {
                best_val = val;
                best = ch;
            }
        }
        labels.push(best as u8);
    }
    LabelVolume::new(grid.clone(), labels)
}

impl MetricsReport {
    /// Human-readable listing, one `key=value` per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("SC-precision={:.6}\n", self.sc_precision));
        out.push_str(&format!("SC-recall={:.6}\n", self.sc_recall));
        out.push_str(&format!("SC-IoU={:.6}\n", self.sc_iou));
        out.push_str(&format!("SSC-mIoU={:.6}\n", self.ssc_miou));
        for (c, iou) in &self.class_iou {
            out.push_str(&format!("class-{c}-IoU={iou:.6}\n"));
        }
        out.push_str(&format!("SC-region-voxels={}\n", self.sc_region_voxels));
        out.push_str(&format!("SSC-region-voxels={}\n", self.ssc_region_voxels));
        out
    }

    /// `class,iou` rows followed by the four summary rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("class,iou\n");
        for (c, iou) in &self.class_iou {
            out.push_str(&format!("{c},{iou:.6}\n"));
        }
        out.push_str(&format!("SC-precision,{:.6}\n", self.sc_precision));
        out.push_str(&format!("SC-recall,{:.6}\n", self.sc_recall));
        out.push_str(&format!("SC-IoU,{:.6}\n", self.sc_iou));
        out.push_str(&format!("SSC-mIoU,{:.6}\n", self.ssc_miou));
        out
    }

    /// Parses the output of [`to_csv`]. Region sizes are not part of the
    /// CSV schema and read back as zero.
    pub fn from_csv(text: &str) -> Result<MetricsReport> {
        let bad = |line: &str| CoreError::InvalidConfig(format!("bad metrics CSV line `{line}`"));
        let mut report = MetricsReport {
            sc_precision: 0.0,
            sc_recall: 0.0,
            sc_iou: 0.0,
            class_iou: Vec::new(),
            ssc_miou: 0.0,
            sc_region_voxels: 0,
            ssc_region_voxels: 0,
        };
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || (i == 0 && line == "class,iou") {
                continue;
            }
            let (key, value) = line.split_once(',').ok_or_else(|| bad(line))?;
            let value: f64 = value.trim().parse().map_err(|_| bad(line))?;
            match key.trim() {
                "SC-precision" => report.sc_precision = value,
                "SC-recall" => report.sc_recall = value,
                "SC-IoU" => report.sc_iou = value,
                "SSC-mIoU" => report.ssc_miou = value,
                class => {
                    let c: u8 = class.parse().map_err(|_| bad(line))?;
                    report.class_iou.push((c, value));
                }
            }
        }
        for &(_, iou) in &report.class_iou {
            if !(0.0..=1.0).contains(&iou) {
                return Err(CoreError::InvalidConfig(
                    "IoU outside [0, 1] in metrics CSV".into(),
                ));
            }
        }
        Ok(report)
    }
}
