//! Synthetic datasets: in-memory training pairs and the on-disk layout
//! written by `gen` (an `index.json` plus one binary grid per sample).
//!
//! Grid files hold an 8-byte header (`u32` height, `u32` width, little-endian)
//! followed by `height * width` little-endian `f32` values in row-major order.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::mapping::TrainingPair;
use crate::synth::{simulate_inference_counterpart, ExpressionParams, SynthWorld, EXPRESSION_DIMS};

pub const INDEX_FILE: &str = "index.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub id: usize,
    pub seed: u64,
    pub e: [f64; EXPRESSION_DIMS],
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub truth_controls: Vec<f64>,
    pub image: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetIndex {
    pub height: usize,
    pub width: usize,
    pub base_seed: u64,
    pub samples: Vec<SampleRecord>,
}

/// Per-sample seed derived from the dataset seed.
pub fn sample_seed(base_seed: u64, id: usize) -> u64 {
    base_seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add(id as u64)
}

/// Training pairs `(I_x, counterpart(I_x), y)` drawn from the synthetic world.
pub fn synthetic_pairs(
    world: &SynthWorld,
    count: usize,
    base_seed: u64,
    res: (usize, usize),
) -> Result<Vec<TrainingPair>> {
    (0..count)
        .map(|id| {
            let expr = ExpressionParams::sample(sample_seed(base_seed, id));
            let s = world.sample(&expr, res)?;
            Ok(TrainingPair {
                counterpart: simulate_inference_counterpart(&s.image),
                input: s.image,
                target: s.truth_controls.values,
            })
        })
        .collect()
}

pub fn encode_grid(grid: &Grid) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + 4 * grid.as_slice().len());
    out.extend_from_slice(&(grid.height() as u32).to_le_bytes());
    out.extend_from_slice(&(grid.width() as u32).to_le_bytes());
    for &v in grid.as_slice() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    out
}

pub fn decode_grid(bytes: &[u8]) -> Result<Grid> {
    if bytes.len() < 8 {
        return Err(Error::Validation("grid file shorter than its header".into()));
    }
    let h = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let w = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if h.checked_mul(w).and_then(|n| n.checked_mul(4)) != Some(body.len()) {
        return Err(Error::Validation(format!(
            "grid header says {h}x{w} but body has {} bytes",
            body.len()
        )));
    }
    let data = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Grid::from_vec(h, w, data)
}

/// Writes `count` samples into `dir` and returns the index.
pub fn write_dataset(
    dir: &Path,
    world: &SynthWorld,
    count: usize,
    base_seed: u64,
    res: (usize, usize),
) -> Result<DatasetIndex> {
    std::fs::create_dir_all(dir)?;
    let mut samples = Vec::with_capacity(count);
    for id in 0..count {
        let seed = sample_seed(base_seed, id);
        let expr = ExpressionParams::sample(seed);
        let s = world.sample(&expr, res)?;
        let image = format!("sample_{id:06}.bin");
        std::fs::write(dir.join(&image), encode_grid(&s.image))?;
        samples.push(SampleRecord {
            id,
            seed,
            e: expr.e,
            yaw: expr.yaw,
            pitch: expr.pitch,
            roll: expr.roll,
            truth_controls: s.truth_controls.values,
            image,
        });
    }
    let index = DatasetIndex {
        height: res.0,
        width: res.1,
        base_seed,
        samples,
    };
    let json = serde_json::to_string_pretty(&index)
        .map_err(|e| Error::Io(format!("serializing index: {e}")))?;
    std::fs::write(dir.join(INDEX_FILE), json)?;
    Ok(index)
}

pub fn read_index(dir: &Path) -> Result<DatasetIndex> {
    let text = std::fs::read_to_string(dir.join(INDEX_FILE))?;
    serde_json::from_str(&text).map_err(|e| Error::Validation(format!("bad dataset index: {e}")))
}

/// Loads a dataset directory as training pairs; counterparts are recomputed.
pub fn load_pairs(dir: &Path) -> Result<Vec<TrainingPair>> {
    let index = read_index(dir)?;
    index
        .samples
        .iter()
        .map(|rec| {
            let grid = decode_grid(&std::fs::read(dir.join(&rec.image))?)?;
            if grid.dims() != (index.height, index.width) {
                return Err(Error::Validation(format!(
                    "{} is {}x{}, index says {}x{}",
                    rec.image,
                    grid.height(),
                    grid.width(),
                    index.height,
                    index.width
                )));
            }
            Ok(TrainingPair {
                counterpart: simulate_inference_counterpart(&grid),
                input: grid,
                target: rec.truth_controls.clone(),
            })
        })
        .collect()
}
