//! Synthetic labeled scenes: an axis-aligned room with boxes, ray-cast
//! into a depth image from a camera inside the room.

use alloc::format;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tsdf::{compute_visibility, depth_to_tsdf};
use super::types::{
    CameraIntrinsics, DepthImage, LabelVolume, SceneSample, VoxelGridSpec, UNLABELED,
};
use crate::error::{CoreError, Result};
use crate::fmath;

/// Parameters of the synthetic scene family. Distances are meters in the
/// camera frame (x right, y down, z forward; the camera sits at the
/// origin, which must lie inside the room).
#[derive(Debug, Clone)]
pub struct SceneConfig {
    /// Number of object classes N; class 1 is the floor, class 2 walls
    /// and ceiling, classes 3..=N are drawn by the boxes (1..=N when
    /// N < 3).
    pub num_classes: usize,
    pub grid: VoxelGridSpec,
    pub camera: CameraIntrinsics,
    pub room_min: [f64; 3],
    pub room_max: [f64; 3],
    pub ceiling: bool,
    /// Thickness of the floor/wall/ceiling slabs.
    pub shell_thickness: f64,
    /// Inclusive range of box counts.
    pub box_count: (usize, usize),
    /// Box edge length range, sampled per axis.
    pub box_size: (f64, f64),
    /// Boxes are placed no closer to the camera than this.
    pub box_near_z: f64,
    pub flipped_tsdf: bool,
}

impl Default for SceneConfig {
    fn default() -> Self {
        SceneConfig {
            num_classes: 4,
            grid: VoxelGridSpec {
                dims: [60, 36, 60],
                voxel_size: 0.08,
                origin: [-2.4, -1.44, 0.24],
                truncation: 0.24,
            },
            camera: CameraIntrinsics {
                fx: 160.0,
                fy: 160.0,
                cx: 80.0,
                cy: 60.0,
                width: 160,
                height: 120,
            },
            room_min: [-2.32, -1.36, -0.4],
            room_max: [2.32, 1.44, 4.96],
            ceiling: false,
            shell_thickness: 0.16,
            box_count: (2, 4),
            box_size: (0.3, 0.8),
            box_near_z: 0.8,
            flipped_tsdf: true,
        }
    }
}

/// One axis-aligned solid of a synthetic scene (shell slab or box).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Solid {
    pub min: [f64; 3],
    pub max: [f64; 3],
    pub class: u8,
}

impl Solid {
    #[inline]
    fn contains(&self, p: [f64; 3]) -> bool {
        (0..3).all(|a| self.min[a] <= p[a] && p[a] <= self.max[a])
    }

    /// Entry distance of the ray `t * dir` from the origin, as the
    /// parameter `t > eps`, or `None` on a miss. Rays never start inside
    /// a solid here (the camera is in free space).
    fn ray_entry(&self, dir: [f64; 3]) -> Option<f64> {
        const EPS: f64 = 1e-9;
        let mut t_near = f64::NEG_INFINITY;
        let mut t_far = f64::INFINITY;
        for a in 0..3 {
            if fmath::abs(dir[a]) < 1e-12 {
                if self.min[a] > 0.0 || self.max[a] < 0.0 {
                    return None;
                }
                continue;
            }
            let mut t0 = self.min[a] / dir[a];
            let mut t1 = self.max[a] / dir[a];
            if t0 > t1 {
                core::mem::swap(&mut t0, &mut t1);
            }
            t_near = t_near.max(t0);
            t_far = t_far.min(t1);
            if t_near > t_far {
                return None;
            }
        }
        if t_far < EPS {
            return None;
        }
        Some(if t_near > EPS { t_near } else { t_far })
    }
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

fn build_solids(config: &SceneConfig, rng: &mut ChaCha8Rng) -> Result<Vec<Solid>> {
    let t = config.shell_thickness;
    let (rmin, rmax) = (config.room_min, config.room_max);
    let mut solids = Vec::new();
    // Floor (class 1), far wall and right wall (class 2), optional ceiling.
    solids.push(Solid {
        min: [rmin[0], rmax[1] - t, rmin[2]],
        max: [rmax[0], rmax[1], rmax[2]],
        class: 1,
    });
    solids.push(Solid {
        min: [rmin[0], rmin[1], rmax[2] - t],
        max: [rmax[0], rmax[1], rmax[2]],
        class: 2,
    });
    solids.push(Solid {
        min: [rmax[0] - t, rmin[1], rmin[2]],
        max: [rmax[0], rmax[1], rmax[2]],
        class: 2,
    });
    if config.ceiling {
        solids.push(Solid {
            min: [rmin[0], rmin[1], rmin[2]],
            max: [rmax[0], rmin[1] + t, rmax[2]],
            class: 2,
        });
    }

    let count = rng.gen_range(config.box_count.0..=config.box_count.1);
    let floor_top = rmax[1] - t;
    const MARGIN: f64 = 0.02;
    for _ in 0..count {
        let sx = uniform(rng, config.box_size.0, config.box_size.1);
        let sy = uniform(rng, config.box_size.0, config.box_size.1);
        let sz = uniform(rng, config.box_size.0, config.box_size.1);
        let x_lo = rmin[0] + MARGIN;
        let x_hi = rmax[0] - t - MARGIN - sx;
        let z_lo = config.box_near_z.max(rmin[2] + MARGIN);
        let z_hi = rmax[2] - t - MARGIN - sz;
        if x_hi < x_lo || z_hi < z_lo || floor_top - sy < rmin[1] {
            return Err(CoreError::InvalidConfig(format!(
                "box of size {sx:.2}x{sy:.2}x{sz:.2} does not fit in the room"
            )));
        }
        let x0 = uniform(rng, x_lo, x_hi);
        let z0 = uniform(rng, z_lo, z_hi);
        let class = if config.num_classes >= 3 {
            rng.gen_range(3..=config.num_classes)
        } else {
            rng.gen_range(1..=config.num_classes)
        } as u8;
        solids.push(Solid {
            min: [x0, floor_top - sy, z0],
            max: [x0 + sx, floor_top, z0 + sz],
            class,
        });
    }
    Ok(solids)
}

fn rasterize_labels(config: &SceneConfig, solids: &[Solid]) -> LabelVolume {
    let grid = &config.grid;
    let [dx, dy, dz] = grid.dims;
    let mut labels = Vec::with_capacity(grid.voxel_count());
    for ix in 0..dx {
        for iy in 0..dy {
            for iz in 0..dz {
                let p = grid.center(ix, iy, iz);
                let in_room = (0..3).all(|a| config.room_min[a] <= p[a] && p[a] <= config.room_max[a]);
                if !in_room {
                    labels.push(UNLABELED);
                    continue;
                }
                // Later solids (the boxes) win over the shell.
                let mut class = 0u8;
                for s in solids {
                    if s.contains(p) {
                        class = s.class;
                    }
                }
                labels.push(class);
            }
        }
    }
    LabelVolume::new(grid.clone(), labels).expect("consistent grid")
}

fn raycast_depth(cam: &CameraIntrinsics, solids: &[Solid]) -> DepthImage {
    let mut data = Vec::with_capacity(cam.width * cam.height);
    for py in 0..cam.height {
        for px in 0..cam.width {
            // Ray through the pixel center with dir.z = 1, so the ray
            // parameter is the z depth directly.
            let dir = [
                (px as f64 + 0.5 - cam.cx) / cam.fx,
                (py as f64 + 0.5 - cam.cy) / cam.fy,
                1.0,
            ];
            let mut depth = f64::INFINITY;
            for s in solids {
                if let Some(t) = s.ray_entry(dir) {
                    depth = depth.min(t);
                }
            }
            let mm = if depth.is_finite() {
                let mm = fmath::round(depth * 1000.0);
                if (1.0..=65535.0).contains(&mm) {
                    mm as u16
                } else {
                    0
                }
            } else {
                0
            };
            data.push(mm);
        }
    }
    DepthImage::new(cam.width, cam.height, data).expect("consistent image")
}

/// The exact solid list (shell slabs then boxes) a given seed produces;
/// the geometry ground truth behind [`synth_scene`].
pub fn scene_solids(seed: u64, config: &SceneConfig) -> Result<Vec<Solid>> {
    config.grid.validate()?;
    config.camera.validate()?;
    if config.num_classes < 1 {
        return Err(CoreError::InvalidConfig("num_classes must be >= 1".into()));
    }
    for a in 0..3 {
        if !(config.room_min[a] < 0.0 && 0.0 < config.room_max[a]) {
            return Err(CoreError::InvalidConfig(format!(
                "camera (the origin) must be inside the room, got axis {a} range [{}, {}]",
                config.room_min[a], config.room_max[a]
            )));
        }
    }
    if !(config.shell_thickness > 0.0) {
        return Err(CoreError::InvalidConfig(
            "shell_thickness must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    build_solids(config, &mut rng)
}

/// Deterministically generates one labeled scene: room shell plus random
/// boxes, rasterized ground-truth labels, a ray-cast depth image, and the
/// derived TSDF and visibility volumes.
pub fn synth_scene(seed: u64, config: &SceneConfig) -> Result<SceneSample> {
    let solids = scene_solids(seed, config)?;
    let labels = rasterize_labels(config, &solids);
    let depth = raycast_depth(&config.camera, &solids);
    let tsdf = depth_to_tsdf(&depth, &config.camera, &config.grid, config.flipped_tsdf)?;
    let visibility = compute_visibility(&depth, &config.camera, &config.grid)?;
    Ok(SceneSample {
        depth,
        camera: config.camera.clone(),
        labels,
        tsdf,
        visibility,
    })
}
