//! Metrics against exhaustive per-voxel confusion enumeration, plus the
//! algebraic identities the scores must satisfy.

mod common;

use common::rng;
use proptest::prelude::*;
use rand::Rng;
use ssc_core::metrics::{evaluate, sc_counts, sc_metrics, ssc_metrics};
use ssc_core::voxel::{LabelVolume, VisibilityVolume, VoxelGridSpec, VoxelState, UNLABELED};

fn grid8() -> VoxelGridSpec {
    VoxelGridSpec {
        dims: [8, 8, 8],
        voxel_size: 0.1,
        origin: [0.0; 3],
        truncation: 0.3,
    }
}

fn random_volumes(seed: u64) -> (LabelVolume, LabelVolume, VisibilityVolume) {
    let mut r = rng(seed);
    let n = 512;
    let classes = r.gen_range(2..6u8);
    let mut lab = |r: &mut rand_chacha::ChaCha8Rng| -> Vec<u8> {
        (0..n)
            .map(|_| {
                if r.gen_bool(0.1) {
                    UNLABELED
                } else {
                    r.gen_range(0..=classes)
                }
            })
            .collect()
    };
    let pred = LabelVolume::new(grid8(), (0..n).map(|_| r.gen_range(0..=classes)).collect()).unwrap();
    let gt = LabelVolume::new(grid8(), lab(&mut r)).unwrap();
    let states: Vec<VoxelState> = (0..n)
        .map(|_| match r.gen_range(0..4u8) {
            0 => VoxelState::ObservedFree,
            1 => VoxelState::ObservedSurface,
            2 => VoxelState::Occluded,
            _ => VoxelState::OutsideFrustum,
        })
        .collect();
    let vis = VisibilityVolume::new(grid8(), states).unwrap();
    (pred, gt, vis)
}

/// Brute-force confusion enumeration straight from the definitions.
fn enumerate_sc(pred: &LabelVolume, gt: &LabelVolume, vis: &VisibilityVolume) -> (u64, u64, u64) {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for i in 0..pred.labels().len() {
        if vis.states()[i] != VoxelState::Occluded || gt.labels()[i] == UNLABELED {
            continue;
        }
        let p = pred.labels()[i] != 0;
        let g = gt.labels()[i] != 0;
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    (tp, fp, fn_)
}

fn enumerate_ssc(
    pred: &LabelVolume,
    gt: &LabelVolume,
    vis: &VisibilityVolume,
    class: u8,
) -> (u64, u64, u64) {
    let (mut tp, mut fp, mut fn_) = (0u64, 0u64, 0u64);
    for i in 0..pred.labels().len() {
        if vis.states()[i] == VoxelState::OutsideFrustum || gt.labels()[i] == UNLABELED {
            continue;
        }
        let p = pred.labels()[i] == class;
        let g = gt.labels()[i] == class;
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    (tp, fp, fn_)
}

#[test]
fn sc_counts_are_integer_exact_against_enumeration() {
    for seed in 0..150 {
        let (pred, gt, vis) = random_volumes(seed);
        let counts = sc_counts(&pred, &gt, &vis).unwrap();
        let (tp, fp, fn_) = enumerate_sc(&pred, &gt, &vis);
        assert_eq!((counts.tp, counts.fp, counts.fn_), (tp, fp, fn_), "seed {seed}");
        let (p, r, iou) = sc_metrics(&pred, &gt, &vis).unwrap();
        if tp + fp + fn_ > 0 {
            if tp + fp > 0 {
                assert_eq!(p, tp as f64 / (tp + fp) as f64);
            }
            if tp + fn_ > 0 {
                assert_eq!(r, tp as f64 / (tp + fn_) as f64);
            }
            assert_eq!(iou, tp as f64 / (tp + fp + fn_) as f64);
        } else {
            assert_eq!((p, r, iou), (1.0, 1.0, 1.0));
        }
    }
}

#[test]
fn ssc_per_class_iou_is_integer_exact_against_enumeration() {
    for seed in 200..350 {
        let (pred, gt, vis) = random_volumes(seed);
        let (per_class, miou) = ssc_metrics(&pred, &gt, &vis).unwrap();
        let mut expect_sum = 0.0;
        for &(c, iou) in &per_class {
            let (tp, fp, fn_) = enumerate_ssc(&pred, &gt, &vis, c);
            assert!(tp + fp + fn_ > 0, "class {c} should be present");
            assert_eq!(iou, tp as f64 / (tp + fp + fn_) as f64, "seed {seed} class {c}");
            expect_sum += iou;
        }
        // Every absent class is really absent.
        for c in 1..UNLABELED {
            if !per_class.iter().any(|&(pc, _)| pc == c) {
                let (tp, fp, fn_) = enumerate_ssc(&pred, &gt, &vis, c);
                assert_eq!(tp + fp + fn_, 0, "seed {seed} class {c}");
            }
        }
        if !per_class.is_empty() {
            assert!((miou - expect_sum / per_class.len() as f64).abs() < 1e-15);
        }
    }
}

#[test]
fn three_class_constructed_case_matches_enumeration() {
    let grid = VoxelGridSpec {
        dims: [2, 2, 2],
        voxel_size: 0.1,
        origin: [0.0; 3],
        truncation: 0.3,
    };
    let gt = LabelVolume::new(grid.clone(), vec![1, 1, 2, 2, 3, 0, 0, UNLABELED]).unwrap();
    let pred = LabelVolume::new(grid.clone(), vec![1, 2, 2, 2, 0, 3, 0, 1]).unwrap();
    let vis = VisibilityVolume::new(grid, vec![VoxelState::Occluded; 8]).unwrap();
    let (per_class, miou) = ssc_metrics(&pred, &gt, &vis).unwrap();
    // class 1: tp 1, fp 0, fn 1 -> 1/2; class 2: tp 2, fp 1, fn 0 -> 2/3;
    // class 3: tp 0, fp 1, fn 1 -> 0.
    assert_eq!(per_class, vec![(1, 0.5), (2, 2.0 / 3.0), (3, 0.0)]);
    assert!((miou - (0.5 + 2.0 / 3.0) / 3.0).abs() < 1e-15);
}

proptest! {
    /// 1/IoU = 1/P + 1/R - 1 whenever TP > 0.
    #[test]
    fn iou_precision_recall_identity(seed in 0u64..300) {
        let (pred, gt, vis) = random_volumes(seed);
        let counts = sc_counts(&pred, &gt, &vis).unwrap();
        if counts.tp > 0 {
            let (p, r, iou) = counts.rates();
            let lhs = 1.0 / iou;
            let rhs = 1.0 / p + 1.0 / r - 1.0;
            prop_assert!((lhs - rhs).abs() < 1e-9, "{counts:?}");
        }
    }

    /// Binary IoU is symmetric in prediction and ground truth.
    #[test]
    fn binary_iou_is_symmetric(seed in 0u64..200) {
        let (pred, gt, vis) = random_volumes(seed);
        // Strip sentinels from gt so the swap is well-posed.
        let cleaned: Vec<u8> = gt.labels().iter().map(|&c| if c == UNLABELED { 0 } else { c }).collect();
        let gt = LabelVolume::new(grid8(), cleaned).unwrap();
        let (_, _, a) = sc_metrics(&pred, &gt, &vis).unwrap();
        let (_, _, b) = sc_metrics(&gt, &pred, &vis).unwrap();
        prop_assert_eq!(a, b);
    }

    /// Voxels outside the evaluation mask never change the counts.
    #[test]
    fn masked_voxels_are_inert(seed in 0u64..200) {
        let (pred, gt, vis) = random_volumes(seed);
        let before = sc_counts(&pred, &gt, &vis).unwrap();
        // Rewrite every non-occluded voxel's prediction arbitrarily.
        let mut r = rng(seed ^ 1);
        let mutated: Vec<u8> = pred
            .labels()
            .iter()
            .zip(vis.states())
            .map(|(&p, &s)| if s == VoxelState::Occluded { p } else { r.gen_range(0..5u8) })
            .collect();
        let mutated = LabelVolume::new(grid8(), mutated).unwrap();
        let after = sc_counts(&mutated, &gt, &vis).unwrap();
        prop_assert_eq!(before, after);
    }

    /// Relabeling permutations permute the per-class array and keep mIoU.
    #[test]
    fn metrics_are_invariant_under_class_permutation(seed in 0u64..200) {
        let (pred, gt, vis) = random_volumes(seed);
        // Permutation of object classes 1..=5 (0 and the sentinel fixed).
        let perm: [u8; 6] = [0, 3, 5, 1, 2, 4];
        let apply = |v: &LabelVolume| {
            let mapped: Vec<u8> = v
                .labels()
                .iter()
                .map(|&c| if c == UNLABELED { c } else { perm[c as usize] })
                .collect();
            LabelVolume::new(grid8(), mapped).unwrap()
        };
        let (base_classes, base_miou) = ssc_metrics(&pred, &gt, &vis).unwrap();
        let (perm_classes, perm_miou) = ssc_metrics(&apply(&pred), &apply(&gt), &vis).unwrap();
        prop_assert!((base_miou - perm_miou).abs() < 1e-12);
        for &(c, iou) in &base_classes {
            let mapped = perm[c as usize];
            let found = perm_classes.iter().find(|&&(pc, _)| pc == mapped).unwrap();
            prop_assert_eq!(found.1, iou);
        }
        // SC is label-agnostic beyond empty/non-empty, so it is unchanged.
        let a = sc_counts(&pred, &gt, &vis).unwrap();
        let b = sc_counts(&apply(&pred), &apply(&gt), &vis).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn full_report_is_consistent_with_components() {
    let (pred, gt, vis) = random_volumes(999);
    let report = evaluate(&pred, &gt, &vis).unwrap();
    let (p, r, iou) = sc_metrics(&pred, &gt, &vis).unwrap();
    let (per_class, miou) = ssc_metrics(&pred, &gt, &vis).unwrap();
    assert_eq!((report.sc_precision, report.sc_recall, report.sc_iou), (p, r, iou));
    assert_eq!(report.class_iou, per_class);
    assert_eq!(report.ssc_miou, miou);
    assert!(report.sc_iou >= 0.0 && report.sc_iou <= 1.0);
    assert!(report.ssc_miou >= 0.0 && report.ssc_miou <= 1.0);
}
