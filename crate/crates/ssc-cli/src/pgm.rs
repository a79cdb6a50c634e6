//! 16-bit binary PGM (P5, maxval 65535) depth images. Samples are
//! big-endian per the PGM convention, so files open in standard viewers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use anyhow::{bail, Context, Result};
use ssc_core::voxel::DepthImage;

pub fn write_pgm(w: &mut impl Write, depth: &DepthImage) -> Result<()> {
    write!(w, "P5\n{} {}\n65535\n", depth.width, depth.height)?;
    for &v in depth.data() {
        w.write_all(&v.to_be_bytes())?;
    }
    Ok(())
}

/// Reads a P5 file with maxval 65535. Header whitespace and `#` comments
/// are handled per the PGM specification.
pub fn read_pgm(r: &mut impl Read) -> Result<DepthImage> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0usize;

    let mut token = |bytes: &[u8]| -> Result<String> {
        // Skip whitespace and comment lines.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            bail!("truncated PGM header");
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };

    let magic = token(&bytes)?;
    if magic != "P5" {
        bail!("not a binary PGM (magic `{magic}`)");
    }
    let width: usize = token(&bytes)?.parse().context("bad PGM width")?;
    let height: usize = token(&bytes)?.parse().context("bad PGM height")?;
    let maxval: u32 = token(&bytes)?.parse().context("bad PGM maxval")?;
    if maxval != 65535 {
        bail!("expected 16-bit PGM (maxval 65535), got {maxval}");
    }
    // Exactly one whitespace byte separates the header from the samples.
    pos += 1;
    let need = width * height * 2;
    if bytes.len() < pos + need {
        bail!(
            "truncated PGM payload: need {need} bytes, have {}",
            bytes.len().saturating_sub(pos)
        );
    }
    let data: Vec<u16> = bytes[pos..pos + need]
        .chunks_exact(2)
        .map(|c| u16::from_be_bytes([c[0], c[1]]))
        .collect();
    Ok(DepthImage::new(width, height, data)?)
}

pub fn save_pgm(path: &Path, depth: &DepthImage) -> Result<()> {
    let mut w = BufWriter::new(
        File::create(path).with_context(|| format!("creating {}", path.display()))?,
    );
    write_pgm(&mut w, depth)
}

pub fn load_pgm(path: &Path) -> Result<DepthImage> {
    let mut r = BufReader::new(
        File::open(path).with_context(|| format!("opening {}", path.display()))?,
    );
    read_pgm(&mut r).with_context(|| format!("reading {}", path.display()))
}
