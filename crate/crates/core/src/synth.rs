//! Deterministic synthetic-face world.
//!
//! Expression coordinates drive keypoint motion, a toy blob image and
//! ground-truth control values through fixed, seeded linear maps. The maps
//! are published in `data/world.json` and must equal `SynthWorld::generate(42)`.

use std::f64::consts::FRAC_PI_6;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::control::{ControlVector, NUM_CONTROLS};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::motion::{
    project_to_grid, rotation_from_euler, transform_keypoints, FeatureVolume, Keypoints,
    MotionParams, DEFAULT_KEYPOINTS,
};

pub const EXPRESSION_DIMS: usize = 8;
pub const WORLD_SEED: u64 = 42;
/// Blob standard deviation in grid cells.
pub const BLOB_SIGMA: f64 = 1.5;
pub const MAX_ANGLE: f64 = FRAC_PI_6;
pub const COUNTERPART_OFFSET: f64 = 0.05;

const PUBLISHED_WORLD: &str = include_str!("../data/world.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpressionParams {
    pub e: [f64; EXPRESSION_DIMS],
    pub yaw: f64,
    pub pitch: f64,
    pub roll: f64,
    pub seed: u64,
}

impl ExpressionParams {
    pub fn neutral() -> Self {
        Self {
            e: [0.0; EXPRESSION_DIMS],
            yaw: 0.0,
            pitch: 0.0,
            roll: 0.0,
            seed: 0,
        }
    }

    /// Uniform draw over the valid ranges, reproducible from `seed`.
    pub fn sample(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let e = std::array::from_fn(|_| rng.random_range(-1.0..=1.0));
        Self {
            e,
            yaw: rng.random_range(-MAX_ANGLE..=MAX_ANGLE),
            pitch: rng.random_range(-MAX_ANGLE..=MAX_ANGLE),
            roll: rng.random_range(-MAX_ANGLE..=MAX_ANGLE),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(v) = self.e.iter().find(|v| !(-1.0..=1.0).contains(*v)) {
            return Err(Error::Validation(format!(
                "expression coordinate {v} outside [-1, 1]"
            )));
        }
        for (name, a) in [("yaw", self.yaw), ("pitch", self.pitch), ("roll", self.roll)] {
            if !(-MAX_ANGLE..=MAX_ANGLE).contains(&a) {
                return Err(Error::Validation(format!(
                    "{name} {a} outside [-pi/6, pi/6]"
                )));
            }
        }
        Ok(())
    }
}

/// Fixed maps of the synthetic world.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthWorld {
    pub canonical: Keypoints,
    /// `3K x 8` deformation basis, row `3k + j` is coordinate `j` of keypoint `k`.
    pub basis: Vec<[f64; EXPRESSION_DIMS]>,
    /// `30 x 8` control weights.
    pub control_weights: Vec<[f64; EXPRESSION_DIMS]>,
    pub control_bias: Vec<f64>,
}

impl SynthWorld {
    /// The world shipped in `data/world.json`.
    pub fn published() -> Self {
        serde_json::from_str(PUBLISHED_WORLD).expect("bundled world.json is valid")
    }

    pub fn generate(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let canonical = Keypoints {
            points: (0..DEFAULT_KEYPOINTS)
                .map(|_| {
                    [
                        rng.random_range(-0.55..0.55),
                        rng.random_range(-0.55..0.55),
                        rng.random_range(-0.2..0.2),
                    ]
                })
                .collect(),
        };
        let basis_dist = Normal::new(0.0, 0.06).unwrap();
        let basis = (0..3 * DEFAULT_KEYPOINTS)
            .map(|_| std::array::from_fn(|_| basis_dist.sample(&mut rng)))
            .collect();
        let weight_dist = Normal::new(0.0, 1.5).unwrap();
        let control_weights = (0..NUM_CONTROLS)
            .map(|_| std::array::from_fn(|_| weight_dist.sample(&mut rng)))
            .collect();
        let bias_dist = Normal::new(0.0, 0.5).unwrap();
        let control_bias = (0..NUM_CONTROLS).map(|_| bias_dist.sample(&mut rng)).collect();
        Self {
            canonical,
            basis,
            control_weights,
            control_bias,
        }
    }

    pub fn k(&self) -> usize {
        self.canonical.k()
    }

    pub fn basis_rank(&self) -> usize {
        let m = DMatrix::from_fn(self.basis.len(), EXPRESSION_DIMS, |r, c| self.basis[r][c]);
        m.rank(1e-10)
    }

    pub fn synth_motion(&self, expr: &ExpressionParams) -> Result<MotionParams> {
        expr.validate()?;
        let points = (0..self.k())
            .map(|k| {
                std::array::from_fn(|j| {
                    let row = &self.basis[3 * k + j];
                    row.iter().zip(&expr.e).map(|(b, e)| b * e).sum()
                })
            })
            .collect();
        Ok(MotionParams {
            rotation: rotation_from_euler(expr.yaw, expr.pitch, expr.roll),
            scale: 1.0 + 0.1 * expr.e[0],
            deformation: Keypoints { points },
            translation: [0.05 * expr.e[1], 0.05 * expr.e[2], 0.0],
        })
    }

    /// `sigmoid(A e + b)`.
    pub fn synth_controls(&self, expr: &ExpressionParams) -> Result<ControlVector> {
        expr.validate()?;
        let values = self
            .control_weights
            .iter()
            .zip(&self.control_bias)
            .map(|(row, b)| {
                let z: f64 = row.iter().zip(&expr.e).map(|(a, e)| a * e).sum::<f64>() + b;
                sigmoid(z)
            })
            .collect();
        Ok(ControlVector {
            values,
            seq: 0,
            capture_ts: 0,
            send_ts: 0,
        })
    }

    pub fn keypoints(&self, expr: &ExpressionParams) -> Result<Keypoints> {
        transform_keypoints(&self.canonical, &self.synth_motion(expr)?)
    }

    pub fn sample(&self, expr: &ExpressionParams, res: (usize, usize)) -> Result<SyntheticSample> {
        let motion = self.synth_motion(expr)?;
        let kp = transform_keypoints(&self.canonical, &motion)?;
        Ok(SyntheticSample {
            image: render_toy(&kp, res)?,
            motion,
            truth_controls: self.synth_controls(expr)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSample {
    pub image: Grid,
    pub motion: MotionParams,
    pub truth_controls: ControlVector,
}

pub(crate) fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Sum of Gaussian blobs at the projected keypoints, normalized to a peak of 1.
pub fn render_toy(keypoints: &Keypoints, res: (usize, usize)) -> Result<Grid> {
    let (h, w) = res;
    if h < 16 || w < 16 {
        return Err(Error::Dimension(format!(
            "toy render needs at least 16x16, got {h}x{w}"
        )));
    }
    Ok(render_blobs(keypoints, h, w, (0, 0, h.min(w)), BLOB_SIGMA))
}

/// Renders a raw camera-style frame: the face occupies the centered square of
/// the frame, blobs scaled so that a center-crop and resize to `face_res`
/// reproduces `render_toy` at that resolution.
pub fn render_frame(keypoints: &Keypoints, width: usize, height: usize, face_res: usize) -> Grid {
    let side = width.min(height);
    let top = (height - side) / 2;
    let left = (width - side) / 2;
    let sigma = BLOB_SIGMA * (side - 1) as f64 / (face_res - 1).max(1) as f64;
    render_blobs(keypoints, height, width, (top, left, side), sigma)
}

fn render_blobs(
    keypoints: &Keypoints,
    h: usize,
    w: usize,
    region: (usize, usize, usize),
    sigma: f64,
) -> Grid {
    let (top, left, side) = region;
    let mut grid = Grid::zeros(h, w);
    let reach = (4.0 * sigma).ceil() as isize;
    let inv = 1.0 / (2.0 * sigma * sigma);
    for p in &keypoints.points {
        let (r, c) = project_to_grid(p, side, side);
        let (r, c) = (r + top as f64, c + left as f64);
        let (rc, cc) = (r.round() as isize, c.round() as isize);
        let r_lo = (rc - reach).max(0) as usize;
        let r_hi = ((rc + reach).min(h as isize - 1)).max(0) as usize;
        let c_lo = (cc - reach).max(0) as usize;
        let c_hi = ((cc + reach).min(w as isize - 1)).max(0) as usize;
        for row in r_lo..=r_hi {
            let dr2 = (row as f64 - r).powi(2);
            for col in c_lo..=c_hi {
                let d2 = dr2 + (col as f64 - c).powi(2);
                let idx = row * w + col;
                grid.as_mut_slice()[idx] += (-d2 * inv).exp();
            }
        }
    }
    let peak = grid.max_value();
    if peak > 0.0 {
        for v in grid.as_mut_slice() {
            *v /= peak;
        }
    }
    grid
}

/// Fixed stand-in for "pass the image through the motion-transfer module":
/// a 3x3 box blur (edge-replicated) followed by a +0.05 brightness offset,
/// clamped to `[0, 1]`.
pub fn simulate_inference_counterpart(img: &Grid) -> Grid {
    let (h, w) = img.dims();
    Grid::from_fn(h, w, |r, c| {
        let mut acc = 0.0;
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                let rr = (r as isize + dr).clamp(0, h as isize - 1) as usize;
                let cc = (c as isize + dc).clamp(0, w as isize - 1) as usize;
                acc += img.get(rr, cc);
            }
        }
        (acc / 9.0 + COUNTERPART_OFFSET).clamp(0.0, 1.0)
    })
}

/// Toy appearance encoder for the source face: two blob channels at
/// different bandwidths.
pub fn encode_appearance(keypoints: &Keypoints, res: (usize, usize)) -> Result<FeatureVolume> {
    let (h, w) = res;
    let sharp = render_blobs(keypoints, h, w, (0, 0, h.min(w)), BLOB_SIGMA);
    let soft = render_blobs(keypoints, h, w, (0, 0, h.min(w)), BLOB_SIGMA * 4.0 / 3.0);
    FeatureVolume::new(vec![sharp, soft])
}
