//! Checkpoint files: a text manifest (name, dtype code, shape, byte
//! offset) followed by the named tensors as concatenated VXT1 records.
//! The network config is serialized as key=value text alongside
//! (`<stem>.net.cfg`), and running normalization statistics ride along
//! as `norm.<layer>.mean` / `norm.<layer>.var` tensors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use ssc_core::net::{NetworkConfig, NormState, ParameterSet};

use crate::config::{network_from_kv, network_to_text, KvConfig};
use crate::vxt::{read_vxt, write_vxt, VxtData, VxtTensor};

const MAGIC_LINE: &str = "SSCKPT1";

#[derive(Debug)]
pub struct Checkpoint {
    pub config: NetworkConfig,
    pub params: ParameterSet<f32>,
    pub norm: Option<NormState>,
}

/// Path of the config file that travels with a checkpoint.
pub fn config_path(checkpoint: &Path) -> PathBuf {
    let mut name = checkpoint.file_stem().unwrap_or_default().to_os_string();
    name.push(".net.cfg");
    checkpoint.with_file_name(name)
}

pub fn save(
    path: &Path,
    config: &NetworkConfig,
    params: &ParameterSet<f32>,
    norm: Option<&NormState>,
) -> Result<()> {
    let mut tensors: Vec<(String, VxtTensor)> = params
        .iter()
        .map(|(name, t)| (name.to_string(), VxtTensor::from_tensor(t)))
        .collect();
    if let Some(norm) = norm {
        for (layer, mean, var) in norm.iter() {
            tensors.push((
                format!("norm.{layer}.mean"),
                VxtTensor {
                    shape: vec![mean.len()],
                    data: VxtData::F64(mean.to_vec()),
                },
            ));
            tensors.push((
                format!("norm.{layer}.var"),
                VxtTensor {
                    shape: vec![var.len()],
                    data: VxtData::F64(var.to_vec()),
                },
            ));
        }
    }

    let mut manifest = format!("{MAGIC_LINE}\ntensors {}\n", tensors.len());
    let mut offset = 0usize;
    for (name, t) in &tensors {
        let shape: Vec<String> = t.shape.iter().map(|e| e.to_string()).collect();
        manifest.push_str(&format!(
            "{name} {} {} {offset}\n",
            t.dtype_code(),
            shape.join("x")
        ));
        offset += t.byte_len();
    }
    manifest.push('\n');

    let mut out = Vec::with_capacity(manifest.len() + offset);
    out.extend_from_slice(manifest.as_bytes());
    for (_, t) in &tensors {
        write_vxt(&mut out, t)?;
    }
    let mut f = fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    f.write_all(&out)?;

    fs::write(config_path(path), network_to_text(config))
        .with_context(|| format!("writing {}", config_path(path).display()))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    let header_end = bytes
        .windows(2)
        .position(|w| w == b"\n\n")
        .context("checkpoint has no manifest terminator")?;
    let manifest = std::str::from_utf8(&bytes[..header_end]).context("manifest is not UTF-8")?;
    let payload = &bytes[header_end + 2..];

    let mut lines = manifest.lines();
    if lines.next() != Some(MAGIC_LINE) {
        bail!("not a checkpoint file (bad magic line)");
    }
    let count_line = lines.next().context("missing tensor count")?;
    let count: usize = count_line
        .strip_prefix("tensors ")
        .context("malformed tensor count")?
        .parse()
        .context("malformed tensor count")?;

    let config = {
        let cfg_path = config_path(path);
        let kv = KvConfig::load(&cfg_path)?;
        network_from_kv(kv)?
    };

    let mut params = ParameterSet::<f32>::default();
    let mut norm = if config.normalization {
        Some(NormState::new(&config)?)
    } else {
        None
    };
    let mut seen = 0usize;
    for line in lines {
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 4 {
            bail!("malformed manifest line `{line}`");
        }
        let (name, offset) = (parts[0], parts[3]);
        let offset: usize = offset.parse().context("bad offset")?;
        if offset >= payload.len() {
            bail!("offset {offset} beyond payload for `{name}`");
        }
        let t = read_vxt(&mut &payload[offset..])
            .with_context(|| format!("tensor `{name}`"))?;
        if let Some(rest) = name.strip_prefix("norm.") {
            let norm = norm
                .as_mut()
                .with_context(|| format!("`{name}` present but normalization is off"))?;
            let layer = rest
                .strip_suffix(".mean")
                .or_else(|| rest.strip_suffix(".var"))
                .with_context(|| format!("bad norm entry `{name}`"))?;
            let values = match &t.data {
                VxtData::F64(v) => v.clone(),
                _ => bail!("norm stats `{name}` must be f64"),
            };
            let (mut mean, mut var) = {
                let (m, v) = norm
                    .stats(layer)
                    .with_context(|| format!("unknown norm layer `{layer}`"))?;
                (m.to_vec(), v.to_vec())
            };
            if rest.ends_with(".mean") {
                mean = values;
            } else {
                var = values;
            }
            norm.set(layer, mean, var)?;
        } else {
            params.insert(name, t.to_f32_tensor()?)?;
        }
        seen += 1;
    }
    if seen != count {
        bail!("manifest promises {count} tensors, found {seen}");
    }
    validate_against_config(&config, &params)?;
    Ok(Checkpoint {
        config,
        params,
        norm,
    })
}

/// The loaded tensors must have exactly the shapes the config implies.
fn validate_against_config(config: &NetworkConfig, params: &ParameterSet<f32>) -> Result<()> {
    let expected = ssc_core::net::init_params::<f32>(config, 0)?;
    if expected.len() != params.len() {
        bail!(
            "checkpoint has {} parameter tensors, config implies {}",
            params.len(),
            expected.len()
        );
    }
    for (name, t) in expected.iter() {
        let loaded = params.get(name)?;
        if loaded.shape() != t.shape() {
            bail!(
                "tensor `{name}`: checkpoint shape {:?} vs config shape {:?}",
                loaded.shape(),
                t.shape()
            );
        }
    }
    Ok(())
}

/// Tensor-level equality of two parameter sets (round-trip checks).
pub fn params_equal(a: &ParameterSet<f32>, b: &ParameterSet<f32>) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b.iter())
            .all(|((an, at), (bn, bt))| an == bn && at == bt)
}
