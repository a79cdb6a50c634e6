//! Scene sample files. A dataset directory holds one `grid.cfg` plus,
//! per scene, `scene_NNNN.depth.pgm`, `.camera.txt`, `.labels.vxt`,
//! `.tsdf.vxt` and `.vis.vxt`.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ssc_core::voxel::{
    LabelVolume, SceneSample, TsdfVolume, VisibilityVolume, VoxelGridSpec, VoxelState,
};

use crate::config::{camera_to_text, grid_from_kv, grid_to_text, load_camera, KvConfig};
use crate::pgm::{load_pgm, save_pgm};
use crate::vxt::{load_vxt, save_vxt, VxtData, VxtTensor};

fn scene_paths(dir: &Path, index: u64) -> [PathBuf; 5] {
    let stem = format!("scene_{index:04}");
    [
        dir.join(format!("{stem}.depth.pgm")),
        dir.join(format!("{stem}.camera.txt")),
        dir.join(format!("{stem}.labels.vxt")),
        dir.join(format!("{stem}.tsdf.vxt")),
        dir.join(format!("{stem}.vis.vxt")),
    ]
}

pub fn save_sample(dir: &Path, index: u64, sample: &SceneSample, flipped: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    let grid_file = dir.join("grid.cfg");
    let grid_text = grid_to_text(&sample.labels.grid, flipped);
    if grid_file.exists() {
        let existing = fs::read_to_string(&grid_file)?;
        if existing != grid_text {
            bail!(
                "dataset at {} uses a different grid spec",
                dir.display()
            );
        }
    } else {
        fs::write(&grid_file, grid_text)?;
    }

    let [depth, camera, labels, tsdf, vis] = scene_paths(dir, index);
    save_pgm(&depth, &sample.depth)?;
    fs::write(&camera, camera_to_text(&sample.camera))?;
    let dims = sample.labels.grid.dims.to_vec();
    save_vxt(
        &labels,
        &VxtTensor {
            shape: dims.clone(),
            data: VxtData::U8(sample.labels.labels().to_vec()),
        },
    )?;
    save_vxt(
        &tsdf,
        &VxtTensor {
            shape: dims.clone(),
            data: VxtData::F32(sample.tsdf.values().to_vec()),
        },
    )?;
    save_vxt(
        &vis,
        &VxtTensor {
            shape: dims,
            data: VxtData::U8(sample.visibility.states().iter().map(|&s| s as u8).collect()),
        },
    )?;
    Ok(())
}

pub fn load_grid(dir: &Path) -> Result<(VoxelGridSpec, bool)> {
    let mut kv = KvConfig::load(&dir.join("grid.cfg"))?;
    let out = grid_from_kv(&mut kv)?;
    kv.finish("grid config")?;
    Ok(out)
}

fn check_dims(shape: &[usize], grid: &VoxelGridSpec, what: &str) -> Result<()> {
    if shape != grid.dims {
        bail!(
            "{what}: volume shape {:?} does not match grid {:?}",
            shape,
            grid.dims
        );
    }
    Ok(())
}

pub fn load_sample(dir: &Path, index: u64) -> Result<SceneSample> {
    let (grid, flipped) = load_grid(dir)?;
    let [depth_p, camera_p, labels_p, tsdf_p, vis_p] = scene_paths(dir, index);
    let depth = load_pgm(&depth_p)?;
    let camera = load_camera(&camera_p)?;

    let labels_t = load_vxt(&labels_p)?;
    let (shape, labels_raw) = labels_t.to_u8()?;
    check_dims(shape, &grid, "labels")?;
    let labels = LabelVolume::new(grid.clone(), labels_raw.to_vec())?;

    let tsdf_t = load_vxt(&tsdf_p)?;
    let tsdf_dense = tsdf_t.to_f32_tensor()?;
    check_dims(tsdf_dense.shape(), &grid, "tsdf")?;
    let tsdf = TsdfVolume::from_values(grid.clone(), tsdf_dense.into_data(), flipped)?;

    let vis_t = load_vxt(&vis_p)?;
    let (shape, vis_raw) = vis_t.to_u8()?;
    check_dims(shape, &grid, "visibility")?;
    let states: Result<Vec<VoxelState>, _> =
        vis_raw.iter().map(|&v| VoxelState::from_u8(v)).collect();
    let visibility = VisibilityVolume::new(grid, states?)?;

    Ok(SceneSample {
        depth,
        camera,
        labels,
        tsdf,
        visibility,
    })
}

/// Indices of all scenes stored in a dataset directory, ascending.
pub fn scene_indices(dir: &Path) -> Result<Vec<u64>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).with_context(|| format!("listing {}", dir.display()))? {
        let name = entry?.file_name();
        let name = name.to_string_lossy();
        if let Some(rest) = name.strip_prefix("scene_") {
            if let Some(idx) = rest.strip_suffix(".labels.vxt") {
                out.push(idx.parse::<u64>().context("bad scene index")?);
            }
        }
    }
    out.sort_unstable();
    if out.is_empty() {
        bail!("no scenes found in {}", dir.display());
    }
    Ok(out)
}

pub fn load_all(dir: &Path) -> Result<Vec<SceneSample>> {
    scene_indices(dir)?
        .into_iter()
        .map(|i| load_sample(dir, i).with_context(|| format!("scene {i}")))
        .collect()
}
