//! Depth images, voxel grids, TSDF voxelization and synthetic scenes.

mod synth;
mod tsdf;
mod types;

pub use synth::{scene_solids, synth_scene, SceneConfig, Solid};
pub use tsdf::{binary_occupancy_labels, compute_visibility, depth_to_tsdf};
pub use types::{
    CameraIntrinsics, DepthImage, LabelVolume, SceneSample, TsdfVolume, VisibilityVolume,
    VoxelGridSpec, VoxelState, UNLABELED,
};
