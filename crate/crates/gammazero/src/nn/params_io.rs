//! Versioned binary parameter files.
//!
//! Header: magic `GZNN`, schema version, then d_node, d_edge, hidden, rounds
//! as little-endian u32. Body: every parameter matrix as little-endian f64 in
//! layout order. Truncated or oversized files fail to load; nothing partial
//! escapes.

use crate::error::{GammaError, Result};
use crate::nn::model::{GnnParameters, Layout};
use crate::nn::tape::{Mat, ParamStore};
use std::io::{Read, Write};
use std::path::Path;

const MAGIC: &[u8; 4] = b"GZNN";
const VERSION: u32 = 1;

pub fn save_params(params: &GnnParameters, path: &Path) -> Result<()> {
    let mut buf: Vec<u8> = Vec::with_capacity(24 + params.store.total_len() * 8);
    buf.extend_from_slice(MAGIC);
    for v in [
        VERSION,
        params.d_node as u32,
        params.d_edge as u32,
        params.hidden as u32,
        params.rounds as u32,
    ] {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    for m in &params.store.mats {
        for v in &m.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(&buf)?;
    Ok(())
}

/// Loads a parameter file, checking the header against `expect_d_node` /
/// `expect_d_edge` (the feature layout compiled into this build).
pub fn load_params(path: &Path, expect_d_node: usize, expect_d_edge: usize) -> Result<GnnParameters> {
    let mut f = std::fs::File::open(path)?;
    let mut bytes = Vec::new();
    f.read_to_end(&mut bytes)?;
    if bytes.len() < 24 {
        return Err(GammaError::ParamsFile("file shorter than header".into()));
    }
    if &bytes[0..4] != MAGIC {
        return Err(GammaError::ParamsFile("bad magic".into()));
    }
    let mut words = [0u32; 5];
    for (i, w) in words.iter_mut().enumerate() {
        let off = 4 + i * 4;
        *w = u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap());
    }
    let [version, d_node, d_edge, hidden, rounds] = words;
    if version != VERSION {
        return Err(GammaError::ParamsFile(format!(
            "unsupported version {version}"
        )));
    }
    if d_node as usize != expect_d_node || d_edge as usize != expect_d_edge {
        return Err(GammaError::ParamsFile(format!(
            "feature dimensions {d_node}x{d_edge} do not match this build's {expect_d_node}x{expect_d_edge}"
        )));
    }
    let layout = Layout::new(d_node as usize, d_edge as usize, hidden as usize, rounds as usize);
    let expected_floats: usize = layout.shapes.iter().map(|&(r, c)| r * c).sum();
    let body = &bytes[24..];
    if body.len() != expected_floats * 8 {
        return Err(GammaError::ParamsFile(format!(
            "body holds {} bytes, expected {}",
            body.len(),
            expected_floats * 8
        )));
    }
    let mut mats = Vec::with_capacity(layout.shapes.len());
    let mut off = 0usize;
    for &(r, c) in &layout.shapes {
        let mut m = Mat::zeros(r, c);
        for v in &mut m.data {
            *v = f64::from_le_bytes(body[off..off + 8].try_into().unwrap());
            off += 8;
        }
        mats.push(m);
    }
    let params = GnnParameters {
        d_node: d_node as usize,
        d_edge: d_edge as usize,
        hidden: hidden as usize,
        rounds: rounds as usize,
        store: ParamStore { mats },
    };
    if !params.all_finite() {
        return Err(GammaError::ParamsFile("non-finite parameter values".into()));
    }
    Ok(params)
}
