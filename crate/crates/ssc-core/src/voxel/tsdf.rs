//! TSDF voxelization, frustum visibility, and the binary label mapping.

use alloc::vec::Vec;

use super::types::{
    CameraIntrinsics, DepthImage, LabelVolume, TsdfVolume, VisibilityVolume, VoxelGridSpec,
    VoxelState, UNLABELED,
};
use crate::error::Result;

/// Depth lookup for a voxel center: the observed depth (meters) at the
/// pixel the center projects to, or `None` outside the frustum or where
/// the measurement is missing.
#[inline]
fn observed_depth(p: [f64; 3], depth: &DepthImage, cam: &CameraIntrinsics) -> Option<f64> {
    let (px, py) = cam.project(p)?;
    let mm = depth.at(px, py);
    if mm == 0 {
        None
    } else {
        Some(mm as f64 / 1000.0)
    }
}

/// Projects every voxel center into the depth image and stores the signed
/// distance `(observed depth - voxel ray depth)`, clamped to the
/// truncation band and normalized to `[-1, 1]` (positive in front of the
/// surface). Voxels outside the frustum or with missing depth read 0.
///
/// With `flipped = true` the values are remapped by
/// `sign(v) * (1 - |v|)` (`sign(0) = +1`), which puts magnitude 1 at the
/// surface and 1 at unobserved voxels.
pub fn depth_to_tsdf(
    depth: &DepthImage,
    cam: &CameraIntrinsics,
    grid: &VoxelGridSpec,
    flipped: bool,
) -> Result<TsdfVolume> {
    cam.validate()?;
    grid.validate()?;
    depth.matches(cam)?;
    let [dx, dy, dz] = grid.dims;
    let mut values = Vec::with_capacity(grid.voxel_count());
    for ix in 0..dx {
        for iy in 0..dy {
            for iz in 0..dz {
                let p = grid.center(ix, iy, iz);
                let v = match observed_depth(p, depth, cam) {
                    Some(obs) => {
                        let sd = (obs - p[2]).clamp(-grid.truncation, grid.truncation);
                        sd / grid.truncation
                    }
                    None => 0.0,
                };
                let v = if flipped {
                    if v < 0.0 {
                        -(1.0 - (-v))
                    } else {
                        1.0 - v
                    }
                } else {
                    v
                };
                values.push(v as f32);
            }
        }
    }
    Ok(TsdfVolume::new(grid.clone(), values, flipped))
}

/// Classifies every voxel against the observed surface: in front of the
/// truncation band is observed-free, within it observed-surface, behind
/// it occluded. Projection misses and missing depth are outside-frustum.
pub fn compute_visibility(
    depth: &DepthImage,
    cam: &CameraIntrinsics,
    grid: &VoxelGridSpec,
) -> Result<VisibilityVolume> {
    cam.validate()?;
    grid.validate()?;
    depth.matches(cam)?;
    let [dx, dy, dz] = grid.dims;
    let mut states = Vec::with_capacity(grid.voxel_count());
    for ix in 0..dx {
        for iy in 0..dy {
            for iz in 0..dz {
                let p = grid.center(ix, iy, iz);
                let state = match observed_depth(p, depth, cam) {
                    None => VoxelState::OutsideFrustum,
                    Some(obs) => {
                        let diff = p[2] - obs;
                        if diff < -grid.truncation {
                            VoxelState::ObservedFree
                        } else if diff <= grid.truncation {
                            VoxelState::ObservedSurface
                        } else {
                            VoxelState::Occluded
                        }
                    }
                };
                states.push(state);
            }
        }
    }
    VisibilityVolume::new(grid.clone(), states)
}

/// Collapses semantic labels to binary occupancy: empty stays class 0,
/// every object class becomes class 1, and the unlabeled sentinel is
/// preserved. Idempotent on volumes that are already binary.
pub fn binary_occupancy_labels(labels: &LabelVolume) -> LabelVolume {
    let mapped: Vec<u8> = labels
        .labels()
        .iter()
        .map(|&c| match c {
            0 => 0,
            UNLABELED => UNLABELED,
            _ => 1,
        })
        .collect();
    LabelVolume::new(labels.grid.clone(), mapped).expect("same grid")
}
