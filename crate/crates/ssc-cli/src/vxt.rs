//! VXT1 tensor files: magic `VXT1`, a u8 dtype code (0 = f32, 1 = f64,
//! 2 = u8), a u8 rank, rank little-endian u32 extents, then the raw
//! little-endian payload.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use ssc_core::{Dtype, Scalar, Tensor};

pub const MAGIC: [u8; 4] = *b"VXT1";

/// Payload of one VXT1 file.
#[derive(Debug, Clone, PartialEq)]
pub enum VxtData {
    F32(Vec<f32>),
    F64(Vec<f64>),
    U8(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct VxtTensor {
    pub shape: Vec<usize>,
    pub data: VxtData,
}

impl VxtTensor {
    pub fn from_tensor<S: Scalar>(t: &Tensor<S>) -> VxtTensor {
        let shape = t.shape().to_vec();
        let data = match S::DTYPE {
            Dtype::F32 => VxtData::F32(t.data().iter().map(|v| v.to_f64() as f32).collect()),
            _ => VxtData::F64(t.data().iter().map(|v| v.to_f64()).collect()),
        };
        VxtTensor { shape, data }
    }

    pub fn element_count(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn dtype_code(&self) -> u8 {
        match self.data {
            VxtData::F32(_) => 0,
            VxtData::F64(_) => 1,
            VxtData::U8(_) => 2,
        }
    }

    pub fn to_f32_tensor(&self) -> Result<Tensor<f32>> {
        match &self.data {
            VxtData::F32(v) => Ok(Tensor::from_vec(&self.shape, v.clone())?),
            _ => bail!("expected f32 payload, found dtype code {}", self.dtype_code()),
        }
    }

    pub fn to_f64_tensor(&self) -> Result<Tensor<f64>> {
        match &self.data {
            VxtData::F64(v) => Ok(Tensor::from_vec(&self.shape, v.clone())?),
            _ => bail!("expected f64 payload, found dtype code {}", self.dtype_code()),
        }
    }

    pub fn to_u8(&self) -> Result<(&[usize], &[u8])> {
        match &self.data {
            VxtData::U8(v) => Ok((&self.shape, v)),
            _ => bail!("expected u8 payload, found dtype code {}", self.dtype_code()),
        }
    }

    /// Serialized size in bytes.
    pub fn byte_len(&self) -> usize {
        let elem = match self.data {
            VxtData::F32(_) => 4,
            VxtData::F64(_) => 8,
            VxtData::U8(_) => 1,
        };
        4 + 1 + 1 + 4 * self.shape.len() + elem * self.element_count()
    }
}

pub fn write_vxt(w: &mut impl Write, t: &VxtTensor) -> Result<()> {
    if t.shape.len() > u8::MAX as usize {
        bail!("rank {} exceeds the format limit", t.shape.len());
    }
    let count: usize = t.shape.iter().product();
    let len = match &t.data {
        VxtData::F32(v) => v.len(),
        VxtData::F64(v) => v.len(),
        VxtData::U8(v) => v.len(),
    };
    if count != len {
        bail!("shape {:?} does not match payload of {len} elements", t.shape);
    }
    w.write_all(&MAGIC)?;
    w.write_all(&[t.dtype_code(), t.shape.len() as u8])?;
    for &e in &t.shape {
        let e = u32::try_from(e).context("extent exceeds u32")?;
        w.write_all(&e.to_le_bytes())?;
    }
    match &t.data {
        VxtData::F32(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        VxtData::F64(v) => {
            for x in v {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        VxtData::U8(v) => w.write_all(v)?,
    }
    Ok(())
}

pub fn read_vxt(r: &mut impl Read) -> Result<VxtTensor> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).context("truncated VXT1 header")?;
    if magic != MAGIC {
        bail!("bad magic {:?}, expected `VXT1`", magic);
    }
    let mut head = [0u8; 2];
    r.read_exact(&mut head).context("truncated VXT1 header")?;
    let (dtype, rank) = (head[0], head[1] as usize);
    let mut shape = Vec::with_capacity(rank);
    for _ in 0..rank {
        let mut e = [0u8; 4];
        r.read_exact(&mut e).context("truncated VXT1 extents")?;
        shape.push(u32::from_le_bytes(e) as usize);
    }
    let count: usize = shape.iter().product();
    let data = match dtype {
        0 => {
            let mut buf = vec![0u8; count * 4];
            r.read_exact(&mut buf).context("truncated VXT1 payload")?;
            VxtData::F32(
                buf.chunks_exact(4)
                    .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        }
        1 => {
            let mut buf = vec![0u8; count * 8];
            r.read_exact(&mut buf).context("truncated VXT1 payload")?;
            VxtData::F64(
                buf.chunks_exact(8)
                    .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                    .collect(),
            )
        }
        2 => {
            let mut buf = vec![0u8; count];
            r.read_exact(&mut buf).context("truncated VXT1 payload")?;
            VxtData::U8(buf)
        }
        code => bail!("unknown dtype code {code}"),
    };
    Ok(VxtTensor { shape, data })
}

pub fn save_vxt(path: &Path, t: &VxtTensor) -> Result<()> {
    let mut w = BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    write_vxt(&mut w, t).with_context(|| format!("writing {}", path.display()))
}

pub fn load_vxt(path: &Path) -> Result<VxtTensor> {
    let mut r = BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    );
    read_vxt(&mut r).with_context(|| format!("reading {}", path.display()))
}
