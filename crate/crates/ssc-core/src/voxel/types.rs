//! Domain types for one observed scene.
//!
//! Conventions: the camera sits at the origin looking along +z, x points
//! right and y points down (image row order). Voxel grids are axis
//! aligned with the camera frame; voxel `(ix, iy, iz)` is stored at
//! linear index `(ix * Dy + iy) * Dz + iz`.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{CoreError, Result};
use crate::fmath;
use crate::tensor::{Scalar, Tensor};

/// Label value for voxels outside the annotated region.
pub const UNLABELED: u8 = 255;

/// Pinhole camera model.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: usize,
    pub height: usize,
}

impl CameraIntrinsics {
    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(CoreError::DegenerateCamera(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if self.width == 0 || self.height == 0 {
            return Err(CoreError::DegenerateCamera("empty image".into()));
        }
        if !(0.0 <= self.cx && self.cx < self.width as f64)
            || !(0.0 <= self.cy && self.cy < self.height as f64)
        {
            return Err(CoreError::DegenerateCamera(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.width, self.height
            )));
        }
        Ok(())
    }

    /// Projects a camera-frame point to a pixel index, or `None` when the
    /// point is behind the camera or lands outside the image.
    pub fn project(&self, p: [f64; 3]) -> Option<(usize, usize)> {
        if p[2] <= 0.0 {
            return None;
        }
        let u = self.fx * p[0] / p[2] + self.cx;
        let v = self.fy * p[1] / p[2] + self.cy;
        if u < 0.0 || v < 0.0 {
            return None;
        }
        let (px, py) = (fmath::floor(u) as usize, fmath::floor(v) as usize);
        if px >= self.width || py >= self.height {
            return None;
        }
        Some((px, py))
    }
}

/// 16-bit depth map in millimeters; 0 marks missing measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    pub width: usize,
    pub height: usize,
    data: Vec<u16>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, data: Vec<u16>) -> Result<Self> {
        if data.len() != width * height {
            return Err(CoreError::ShapeMismatch {
                op: "depth_image",
                detail: format!(
                    "{}x{} image needs {} samples, got {}",
                    width,
                    height,
                    width * height,
                    data.len()
                ),
            });
        }
        Ok(DepthImage {
            width,
            height,
            data,
        })
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> u16 {
        self.data[y * self.width + x]
    }

    pub fn data(&self) -> &[u16] {
        &self.data
    }

    pub fn matches(&self, cam: &CameraIntrinsics) -> Result<()> {
        if self.width != cam.width || self.height != cam.height {
            return Err(CoreError::ShapeMismatch {
                op: "depth_image",
                detail: format!(
                    "depth {}x{} vs camera {}x{}",
                    self.width, self.height, cam.width, cam.height
                ),
            });
        }
        Ok(())
    }
}

/// Geometry of a voxel grid in the camera frame.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelGridSpec {
    pub dims: [usize; 3],
    /// Edge length of one voxel in meters.
    pub voxel_size: f64,
    /// Camera-frame position of the grid's minimum corner, meters.
    pub origin: [f64; 3],
    /// TSDF truncation band in meters.
    pub truncation: f64,
}

impl VoxelGridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dims.iter().any(|&d| d == 0) {
            return Err(CoreError::InvalidConfig(format!(
                "grid dims must be >= 1, got {:?}",
                self.dims
            )));
        }
        if !(self.voxel_size > 0.0) || !(self.truncation > 0.0) {
            return Err(CoreError::InvalidConfig(
                "voxel_size and truncation must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn voxel_count(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Camera-frame center of voxel `(ix, iy, iz)`.
    #[inline]
    pub fn center(&self, ix: usize, iy: usize, iz: usize) -> [f64; 3] {
        [
            self.origin[0] + self.voxel_size * (ix as f64 + 0.5),
            self.origin[1] + self.voxel_size * (iy as f64 + 0.5),
            self.origin[2] + self.voxel_size * (iz as f64 + 0.5),
        ]
    }

    #[inline]
    pub fn linear(&self, ix: usize, iy: usize, iz: usize) -> usize {
        (ix * self.dims[1] + iy) * self.dims[2] + iz
    }

    pub fn check_same(&self, other: &VoxelGridSpec, op: &'static str) -> Result<()> {
        if self != other {
            return Err(CoreError::ShapeMismatch {
                op,
                detail: "volumes use different grid specs".into(),
            });
        }
        Ok(())
    }
}

/// Per-voxel truncated signed distance in `[-1, 1]`. The `flipped` flag
/// records which convention the values already use; the transform is
/// one-way and applied only at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct TsdfVolume {
    pub grid: VoxelGridSpec,
    values: Vec<f32>,
    flipped: bool,
}

impl TsdfVolume {
    pub(crate) fn new(grid: VoxelGridSpec, values: Vec<f32>, flipped: bool) -> Self {
        debug_assert_eq!(values.len(), grid.voxel_count());
        debug_assert!(values.iter().all(|v| (-1.0..=1.0).contains(v)));
        TsdfVolume {
            grid,
            values,
            flipped,
        }
    }

    /// Wraps already-voxelized values loaded from a file.
    pub fn from_values(grid: VoxelGridSpec, values: Vec<f32>, flipped: bool) -> Result<Self> {
        grid.validate()?;
        if values.len() != grid.voxel_count() {
            return Err(CoreError::ShapeMismatch {
                op: "tsdf_volume",
                detail: format!(
                    "grid {:?} needs {} values, got {}",
                    grid.dims,
                    grid.voxel_count(),
                    values.len()
                ),
            });
        }
        if let Some(v) = values.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(CoreError::InvalidConfig(format!(
                "TSDF value {v} outside [-1, 1]"
            )));
        }
        Ok(TsdfVolume {
            grid,
            values,
            flipped,
        })
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn is_flipped(&self) -> bool {
        self.flipped
    }

    /// Network input tensor of shape `[1, Dx, Dy, Dz]`.
    pub fn to_tensor<S: Scalar>(&self) -> Tensor<S> {
        let shape = [1, self.grid.dims[0], self.grid.dims[1], self.grid.dims[2]];
        let data = self.values.iter().map(|&v| S::from_f64(v as f64)).collect();
        Tensor::from_vec(&shape, data).expect("consistent grid")
    }
}

/// Per-voxel semantic class: 0 is empty, `1..=N` are object classes, and
/// [`UNLABELED`] marks voxels outside the annotated region.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelVolume {
    pub grid: VoxelGridSpec,
    labels: Vec<u8>,
}

impl LabelVolume {
    pub fn new(grid: VoxelGridSpec, labels: Vec<u8>) -> Result<Self> {
        grid.validate()?;
        if labels.len() != grid.voxel_count() {
            return Err(CoreError::ShapeMismatch {
                op: "label_volume",
                detail: format!(
                    "grid {:?} needs {} labels, got {}",
                    grid.dims,
                    grid.voxel_count(),
                    labels.len()
                ),
            });
        }
        Ok(LabelVolume { grid, labels })
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn labels_mut(&mut self) -> &mut [u8] {
        &mut self.labels
    }
}

/// Observation state of one voxel with respect to the depth image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum VoxelState {
    ObservedFree = 0,
    ObservedSurface = 1,
    Occluded = 2,
    OutsideFrustum = 3,
}

impl VoxelState {
    pub fn from_u8(v: u8) -> Result<Self> {
        Ok(match v {
            0 => VoxelState::ObservedFree,
            1 => VoxelState::ObservedSurface,
            2 => VoxelState::Occluded,
            3 => VoxelState::OutsideFrustum,
            _ => {
                return Err(CoreError::InvalidConfig(format!(
                    "invalid voxel state code {v}"
                )))
            }
        })
    }
}

/// Per-voxel observation states.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilityVolume {
    pub grid: VoxelGridSpec,
    states: Vec<VoxelState>,
}

impl VisibilityVolume {
    pub fn new(grid: VoxelGridSpec, states: Vec<VoxelState>) -> Result<Self> {
        grid.validate()?;
        if states.len() != grid.voxel_count() {
            return Err(CoreError::ShapeMismatch {
                op: "visibility_volume",
                detail: format!(
                    "grid {:?} needs {} states, got {}",
                    grid.dims,
                    grid.voxel_count(),
                    states.len()
                ),
            });
        }
        Ok(VisibilityVolume { grid, states })
    }

    pub fn states(&self) -> &[VoxelState] {
        &self.states
    }
}

/// One training/evaluation sample: raw sensor input, ground truth, and
/// the volumes derived from the depth image. All grids share one spec.
#[derive(Debug, Clone)]
pub struct SceneSample {
    pub depth: DepthImage,
    pub camera: CameraIntrinsics,
    pub labels: LabelVolume,
    pub tsdf: TsdfVolume,
    pub visibility: VisibilityVolume,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection_lands_on_the_pixel_containing_u_v() {
        let cam = CameraIntrinsics {
            fx: 100.0,
            fy: 100.0,
            cx: 32.0,
            cy: 24.0,
            width: 64,
            height: 48,
        };
        cam.validate().unwrap();
        // Point on the optical axis hits the principal pixel.
        assert_eq!(cam.project([0.0, 0.0, 1.0]), Some((32, 24)));
        // Behind the camera never projects.
        assert_eq!(cam.project([0.0, 0.0, -1.0]), None);
        // Far off-axis leaves the image.
        assert_eq!(cam.project([10.0, 0.0, 1.0]), None);
    }

    #[test]
    fn grid_linear_index_is_z_fastest() {
        let grid = VoxelGridSpec {
            dims: [2, 3, 4],
            voxel_size: 0.1,
            origin: [0.0; 3],
            truncation: 0.3,
        };
        assert_eq!(grid.linear(0, 0, 1), 1);
        assert_eq!(grid.linear(0, 1, 0), 4);
        assert_eq!(grid.linear(1, 0, 0), 12);
    }

    #[test]
    fn degenerate_camera_is_rejected() {
        let cam = CameraIntrinsics {
            fx: 0.0,
            fy: 100.0,
            cx: 1.0,
            cy: 1.0,
            width: 4,
            height: 4,
        };
        assert!(cam.validate().is_err());
    }

    #[test]
    fn tsdf_values_outside_unit_range_are_rejected() {
        let grid = VoxelGridSpec {
            dims: [1, 1, 2],
            voxel_size: 0.1,
            origin: [0.0; 3],
            truncation: 0.3,
        };
        assert!(TsdfVolume::from_values(grid, alloc::vec![0.0, 1.5], false).is_err());
    }
}
