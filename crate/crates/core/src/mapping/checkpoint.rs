//! Binary checkpoint: `"VFMN"`, u32 version, architecture dims, then the
//! parameters as little-endian f32. All integers are little-endian u32.
//!
//! ```text
//! magic[4] version input_h input_w n_hidden hidden[n_hidden] outputs n_params params[n_params]
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::control::NUM_CONTROLS;
use crate::error::{Error, Result};

use super::model::RegressorModel;

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"VFMN";
pub const CHECKPOINT_VERSION: u32 = 1;

pub fn encode(model: &RegressorModel) -> Vec<u8> {
    let (h, w) = model.input_dims();
    let mut out = Vec::with_capacity(32 + 4 * model.param_count());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    let mut put = |v: u32| out.extend_from_slice(&v.to_le_bytes());
    put(CHECKPOINT_VERSION);
    put(h as u32);
    put(w as u32);
    put(model.hidden().len() as u32);
    for &d in model.hidden() {
        put(d as u32);
    }
    put(NUM_CONTROLS as u32);
    put(model.param_count() as u32);
    for &p in model.params() {
        out.extend_from_slice(&(p as f32).to_le_bytes());
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<RegressorModel> {
    let mut cur = bytes;
    let mut magic = [0u8; 4];
    read_exact(&mut cur, &mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Validation("not a mapping-network checkpoint".into()));
    }
    let version = read_u32(&mut cur)?;
    if version != CHECKPOINT_VERSION {
        return Err(Error::Validation(format!("unsupported checkpoint version {version}")));
    }
    let h = read_u32(&mut cur)? as usize;
    let w = read_u32(&mut cur)? as usize;
    let n_hidden = read_u32(&mut cur)? as usize;
    if n_hidden > 64 {
        return Err(Error::Validation(format!("implausible layer count {n_hidden}")));
    }
    let hidden = (0..n_hidden)
        .map(|_| read_u32(&mut cur).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let outputs = read_u32(&mut cur)? as usize;
    if outputs != NUM_CONTROLS {
        return Err(Error::Validation(format!(
            "checkpoint has {outputs} outputs, expected {NUM_CONTROLS}"
        )));
    }
    let n = read_u32(&mut cur)? as usize;
    if cur.len() != 4 * n {
        return Err(Error::Validation(format!(
            "checkpoint declares {n} parameters but carries {} bytes",
            cur.len()
        )));
    }
    let params = cur
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    RegressorModel::from_params(h, w, &hidden, params)
}

pub fn save(model: &RegressorModel, path: &Path) -> Result<()> {
    let mut f = std::fs::File::create(path)?;
    f.write_all(&encode(model))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<RegressorModel> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    decode(&buf)
}

fn read_exact(cur: &mut &[u8], out: &mut [u8]) -> Result<()> {
    if cur.len() < out.len() {
        return Err(Error::Validation("truncated checkpoint".into()));
    }
    let (head, rest) = cur.split_at(out.len());
    out.copy_from_slice(head);
    *cur = rest;
    Ok(())
}

fn read_u32(cur: &mut &[u8]) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(cur, &mut b)?;
    Ok(u32::from_le_bytes(b))
}
