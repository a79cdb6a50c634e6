//! Key=value configuration files and the camera text format.
//!
//! Every parser consumes its known keys and rejects anything left over,
//! so typos fail loudly. Command-line `--set key=value` overrides win
//! over file values.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use ssc_core::net::NetworkConfig;
use ssc_core::voxel::{CameraIntrinsics, SceneConfig, VoxelGridSpec};

/// Ordered key=value store with taken-key tracking.
#[derive(Debug, Clone, Default)]
pub struct KvConfig {
    entries: BTreeMap<String, String>,
}

impl KvConfig {
    /// Parses `key=value` lines; `#` starts a comment, blank lines are
    /// ignored.
    pub fn parse(text: &str) -> Result<KvConfig> {
        let mut entries = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .with_context(|| format!("line {}: expected key=value, got `{line}`", lineno + 1))?;
            entries.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(KvConfig { entries })
    }

    pub fn load(path: &Path) -> Result<KvConfig> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Applies `key=value` override strings; overrides win.
    pub fn apply_overrides(&mut self, overrides: &[String]) -> Result<()> {
        for o in overrides {
            let (key, value) = o
                .split_once('=')
                .with_context(|| format!("override `{o}` is not key=value"))?;
            self.entries
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(())
    }

    pub fn take(&mut self, key: &str) -> Option<String> {
        self.entries.remove(key)
    }

    pub fn take_parsed<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => match v.parse::<T>() {
                Ok(x) => Ok(Some(x)),
                Err(e) => bail!("key `{key}`: cannot parse `{v}`: {e}"),
            },
        }
    }

    pub fn take_bool(&mut self, key: &str) -> Result<Option<bool>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => match v.as_str() {
                "true" | "1" | "on" | "yes" => Ok(Some(true)),
                "false" | "0" | "off" | "no" => Ok(Some(false)),
                other => bail!("key `{key}`: expected a boolean, got `{other}`"),
            },
        }
    }

    /// Comma-separated list of N numbers.
    pub fn take_list<T: std::str::FromStr, const N: usize>(
        &mut self,
        key: &str,
    ) -> Result<Option<[T; N]>>
    where
        T::Err: std::fmt::Display,
        T: std::fmt::Debug,
    {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => {
                let parts: Vec<&str> = v.split(',').map(str::trim).collect();
                if parts.len() != N {
                    bail!("key `{key}`: expected {N} comma-separated values, got {}", parts.len());
                }
                let mut out = Vec::with_capacity(N);
                for p in parts {
                    match p.parse::<T>() {
                        Ok(x) => out.push(x),
                        Err(e) => bail!("key `{key}`: cannot parse `{p}`: {e}"),
                    }
                }
                Ok(Some(out.try_into().expect("length checked")))
            }
        }
    }

    /// `AxBxC` extents.
    pub fn take_dims(&mut self, key: &str) -> Result<Option<[usize; 3]>> {
        match self.entries.remove(key) {
            None => Ok(None),
            Some(v) => Ok(Some(parse_dims(&v)?)),
        }
    }

    /// Fails when unconsumed keys remain.
    pub fn finish(self, what: &str) -> Result<()> {
        if let Some(key) = self.entries.keys().next() {
            bail!("unknown key `{key}` in {what}");
        }
        Ok(())
    }
}

pub fn parse_dims(text: &str) -> Result<[usize; 3]> {
    let parts: Vec<&str> = text.split('x').collect();
    if parts.len() != 3 {
        bail!("expected DxHxW, got `{text}`");
    }
    let mut dims = [0usize; 3];
    for (i, p) in parts.iter().enumerate() {
        dims[i] = p.trim().parse().with_context(|| format!("bad extent `{p}`"))?;
    }
    Ok(dims)
}

/// `start..end` (half-open) seed ranges for the synthesizer.
pub fn parse_seed_range(text: &str) -> Result<std::ops::Range<u64>> {
    let (a, b) = text
        .split_once("..")
        .with_context(|| format!("expected START..END, got `{text}`"))?;
    let start: u64 = a.trim().parse().context("bad range start")?;
    let end: u64 = b.trim().parse().context("bad range end")?;
    if end <= start {
        bail!("empty seed range `{text}`");
    }
    Ok(start..end)
}

/// Camera text file: exactly the five lines
/// `fx=`, `fy=`, `cx=`, `cy=`, `size=WxH`.
pub fn camera_from_kv(mut kv: KvConfig) -> Result<CameraIntrinsics> {
    let fx = kv
        .take_parsed::<f64>("fx")?
        .context("camera file: missing fx")?;
    let fy = kv
        .take_parsed::<f64>("fy")?
        .context("camera file: missing fy")?;
    let cx = kv
        .take_parsed::<f64>("cx")?
        .context("camera file: missing cx")?;
    let cy = kv
        .take_parsed::<f64>("cy")?
        .context("camera file: missing cy")?;
    let size = kv.take("size").context("camera file: missing size")?;
    let (w, h) = size
        .split_once('x')
        .with_context(|| format!("size `{size}` is not WxH"))?;
    let cam = CameraIntrinsics {
        fx,
        fy,
        cx,
        cy,
        width: w.trim().parse().context("bad width")?,
        height: h.trim().parse().context("bad height")?,
    };
    kv.finish("camera file")?;
    cam.validate()?;
    Ok(cam)
}

pub fn load_camera(path: &Path) -> Result<CameraIntrinsics> {
    camera_from_kv(KvConfig::load(path)?)
}

pub fn camera_to_text(cam: &CameraIntrinsics) -> String {
    format!(
        "fx={}\nfy={}\ncx={}\ncy={}\nsize={}x{}\n",
        cam.fx, cam.fy, cam.cx, cam.cy, cam.width, cam.height
    )
}

/// Grid keys: `dims=DxHxW`, `voxel_size`, `origin=x,y,z`, `truncation`,
/// plus the dataset-level `flipped` TSDF mode.
pub fn grid_from_kv(kv: &mut KvConfig) -> Result<(VoxelGridSpec, bool)> {
    let mut grid = VoxelGridSpec {
        dims: [60, 36, 60],
        voxel_size: 0.08,
        origin: [-2.4, -1.44, 0.24],
        truncation: 0.24,
    };
    if let Some(dims) = kv.take_dims("dims")? {
        grid.dims = dims;
    }
    if let Some(v) = kv.take_parsed::<f64>("voxel_size")? {
        grid.voxel_size = v;
    }
    if let Some(o) = kv.take_list::<f64, 3>("origin")? {
        grid.origin = o;
    }
    if let Some(t) = kv.take_parsed::<f64>("truncation")? {
        grid.truncation = t;
    }
    let flipped = kv.take_bool("flipped")?.unwrap_or(true);
    grid.validate()?;
    Ok((grid, flipped))
}

pub fn grid_to_text(grid: &VoxelGridSpec, flipped: bool) -> String {
    format!(
        "dims={}x{}x{}\nvoxel_size={}\norigin={},{},{}\ntruncation={}\nflipped={}\n",
        grid.dims[0],
        grid.dims[1],
        grid.dims[2],
        grid.voxel_size,
        grid.origin[0],
        grid.origin[1],
        grid.origin[2],
        grid.truncation,
        flipped
    )
}

/// Scene configuration: grid keys plus `num_classes`, `room_min`,
/// `room_max`, `ceiling`, `shell_thickness`, `box_count=min,max`,
/// `box_size=min,max`, `box_near_z`, and the camera keys `fx fy cx cy
/// size`.
pub fn scene_from_kv(mut kv: KvConfig) -> Result<SceneConfig> {
    let mut cfg = SceneConfig::default();
    let (grid, flipped) = grid_from_kv(&mut kv)?;
    cfg.grid = grid;
    cfg.flipped_tsdf = flipped;
    if let Some(n) = kv.take_parsed::<usize>("num_classes")? {
        cfg.num_classes = n;
    }
    if let Some(v) = kv.take_list::<f64, 3>("room_min")? {
        cfg.room_min = v;
    }
    if let Some(v) = kv.take_list::<f64, 3>("room_max")? {
        cfg.room_max = v;
    }
    if let Some(v) = kv.take_bool("ceiling")? {
        cfg.ceiling = v;
    }
    if let Some(v) = kv.take_parsed::<f64>("shell_thickness")? {
        cfg.shell_thickness = v;
    }
    if let Some([a, b]) = kv.take_list::<usize, 2>("box_count")? {
        cfg.box_count = (a, b);
    }
    if let Some([a, b]) = kv.take_list::<f64, 2>("box_size")? {
        cfg.box_size = (a, b);
    }
    if let Some(v) = kv.take_parsed::<f64>("box_near_z")? {
        cfg.box_near_z = v;
    }
    if let Some(v) = kv.take_parsed::<f64>("fx")? {
        cfg.camera.fx = v;
    }
    if let Some(v) = kv.take_parsed::<f64>("fy")? {
        cfg.camera.fy = v;
    }
    if let Some(v) = kv.take_parsed::<f64>("cx")? {
        cfg.camera.cx = v;
    }
    if let Some(v) = kv.take_parsed::<f64>("cy")? {
        cfg.camera.cy = v;
    }
    if let Some(size) = kv.take("size") {
        let (w, h) = size
            .split_once('x')
            .with_context(|| format!("size `{size}` is not WxH"))?;
        cfg.camera.width = w.trim().parse().context("bad width")?;
        cfg.camera.height = h.trim().parse().context("bad height")?;
    }
    kv.finish("scene config")?;
    cfg.camera.validate()?;
    Ok(cfg)
}

/// Network keys: `num_classes`, `stem_channels`, `stage_channels=a,b,c`,
/// `blocks_per_stage=a,b,c`, `dilation_schedule=a,b,c,d,e,f`,
/// `attention_reduction`, `agg_channels`, `use_dilation`,
/// `use_feature_agg`, `use_ga`, `use_condition`, `downsample_factor`,
/// `normalization`.
pub fn network_from_kv(mut kv: KvConfig) -> Result<NetworkConfig> {
    let mut cfg = NetworkConfig::default();
    if let Some(v) = kv.take_parsed::<usize>("num_classes")? {
        cfg.num_classes = v;
    }
    if let Some(v) = kv.take_parsed::<usize>("stem_channels")? {
        cfg.stem_channels = v;
    }
    if let Some(v) = kv.take_list::<usize, 3>("stage_channels")? {
        cfg.stage_channels = v;
    }
    if let Some(v) = kv.take_list::<usize, 3>("blocks_per_stage")? {
        cfg.blocks_per_stage = v;
    }
    if let Some(v) = kv.take_list::<usize, 6>("dilation_schedule")? {
        cfg.dilation_schedule = v;
    }
    if let Some(v) = kv.take_parsed::<usize>("attention_reduction")? {
        cfg.attention_reduction = v;
    }
    if let Some(v) = kv.take_parsed::<usize>("agg_channels")? {
        cfg.agg_channels = v;
    }
    if let Some(v) = kv.take_bool("use_dilation")? {
        cfg.use_dilation = v;
    }
    if let Some(v) = kv.take_bool("use_feature_agg")? {
        cfg.use_feature_agg = v;
    }
    if let Some(v) = kv.take_bool("use_ga")? {
        cfg.use_ga = v;
    }
    if let Some(v) = kv.take_bool("use_condition")? {
        cfg.use_condition = v;
    }
    if let Some(v) = kv.take_parsed::<usize>("downsample_factor")? {
        cfg.downsample_factor = v;
    }
    if let Some(v) = kv.take_bool("normalization")? {
        cfg.normalization = v;
    }
    kv.finish("network config")?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn network_to_text(cfg: &NetworkConfig) -> String {
    format!(
        "num_classes={}\nstem_channels={}\nstage_channels={},{},{}\nblocks_per_stage={},{},{}\n\
         dilation_schedule={},{},{},{},{},{}\nattention_reduction={}\nagg_channels={}\n\
         use_dilation={}\nuse_feature_agg={}\nuse_ga={}\nuse_condition={}\n\
         downsample_factor={}\nnormalization={}\n",
        cfg.num_classes,
        cfg.stem_channels,
        cfg.stage_channels[0],
        cfg.stage_channels[1],
        cfg.stage_channels[2],
        cfg.blocks_per_stage[0],
        cfg.blocks_per_stage[1],
        cfg.blocks_per_stage[2],
        cfg.dilation_schedule[0],
        cfg.dilation_schedule[1],
        cfg.dilation_schedule[2],
        cfg.dilation_schedule[3],
        cfg.dilation_schedule[4],
        cfg.dilation_schedule[5],
        cfg.attention_reduction,
        cfg.agg_channels,
        cfg.use_dilation,
        cfg.use_feature_agg,
        cfg.use_ga,
        cfg.use_condition,
        cfg.downsample_factor,
        cfg.normalization
    )
}

/// Training keys: `batch_size`, `epochs`, `lr0`, `momentum`,
/// `weight_decay`, `eval_every`, `seed`, and the dataset source
/// (`data_dir`, or `synth_seeds=A..B` with `scene_config=PATH`).
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr0: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    /// Evaluate on the training set every this many iterations (0 = off).
    pub eval_every: usize,
    pub seed: u64,
    pub data_dir: Option<String>,
    pub synth_seeds: Option<std::ops::Range<u64>>,
    pub scene_config: Option<String>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 1,
            epochs: 1,
            lr0: 0.1,
            momentum: 0.9,
            weight_decay: 0.0005,
            eval_every: 0,
            seed: 0,
            data_dir: None,
            synth_seeds: None,
            scene_config: None,
        }
    }
}

pub fn train_from_kv(mut kv: KvConfig) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    if let Some(v) = kv.take_parsed::<usize>("batch_size")? {
        cfg.batch_size = v;
    }
    if let Some(v) = kv.take_parsed::<usize>("epochs")? {
        cfg.epochs = v;
    }
    if let Some(v) = kv.take_parsed::<f64>("lr0")? {
        cfg.lr0 = v;
    }
    if let Some(v) = kv.take_parsed::<f64>("momentum")? {
        cfg.momentum = v;
    }
    if let Some(v) = kv.take_parsed::<f64>("weight_decay")? {
        cfg.weight_decay = v;
    }
    if let Some(v) = kv.take_parsed::<usize>("eval_every")? {
        cfg.eval_every = v;
    }
    if let Some(v) = kv.take_parsed::<u64>("seed")? {
        cfg.seed = v;
    }
    cfg.data_dir = kv.take("data_dir");
    if let Some(r) = kv.take("synth_seeds") {
        cfg.synth_seeds = Some(parse_seed_range(&r)?);
    }
    cfg.scene_config = kv.take("scene_config");
    kv.finish("train config")?;
    if cfg.batch_size == 0 || cfg.epochs == 0 {
        bail!("batch_size and epochs must be >= 1");
    }
    Ok(cfg)
}
