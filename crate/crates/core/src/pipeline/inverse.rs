use nalgebra::{DMatrix, DVector};

use super::frame::preprocess;
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::motion::MotionParams;
use crate::synth::{render_toy, ExpressionParams, SynthWorld, EXPRESSION_DIMS, MAX_ANGLE};

/// Side of the thumbnail the inverse regresses from.
pub const INVERSE_THUMB: usize = 12;
const OUTPUTS: usize = EXPRESSION_DIMS + 3;

/// Linear ridge estimate of expression coordinates from a downsampled toy
/// render, standing in for a learned motion extractor.
#[derive(Debug, Clone)]
pub struct RendererInverse {
    world: SynthWorld,
    input_dims: (usize, usize),
    /// `(thumb cells + 1) x 11`, bias row last.
    weights: DMatrix<f64>,
}

fn thumb_features(img: &Grid) -> Result<Vec<f64>> {
    let t = preprocess(img, (INVERSE_THUMB, INVERSE_THUMB))?;
    let mut f = t.into_vec();
    f.push(1.0);
    Ok(f)
}

impl RendererInverse {
    /// Fits on `samples` random renders at `input_dims`.
    pub fn fit(world: &SynthWorld, input_dims: (usize, usize), samples: usize, ridge: f64, seed: u64) -> Result<Self> {
        if samples == 0 || !(ridge > 0.0) {
            return Err(Error::Config("inverse needs samples > 0 and ridge > 0".into()));
        }
        let n_feat = INVERSE_THUMB * INVERSE_THUMB + 1;
        let mut x = DMatrix::zeros(samples, n_feat);
        let mut y = DMatrix::zeros(samples, OUTPUTS);
        for i in 0..samples {
            let expr = ExpressionParams::sample(seed.wrapping_add(i as u64));
            let img = render_toy(&world.keypoints(&expr)?, input_dims)?;
            for (j, v) in thumb_features(&img)?.into_iter().enumerate() {
                x[(i, j)] = v;
            }
            for (j, v) in expr_vector(&expr).into_iter().enumerate() {
                y[(i, j)] = v;
            }
        }
        let xt = x.transpose();
        let gram = &xt * &x + DMatrix::identity(n_feat, n_feat) * ridge;
        let weights = gram
            .cholesky()
            .ok_or_else(|| Error::Numeric("ridge system not positive definite".into()))?
            .solve(&(&xt * &y));
        Ok(Self {
            world: world.clone(),
            input_dims,
            weights,
        })
    }

    pub fn input_dims(&self) -> (usize, usize) {
        self.input_dims
    }

    pub fn estimate_expression(&self, img: &Grid) -> Result<ExpressionParams> {
        let f = DVector::from_vec(thumb_features(img)?);
        let out = self.weights.tr_mul(&f);
        if out.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("inverse produced non-finite estimate".into()));
        }
        let mut expr = ExpressionParams::neutral();
        for (dst, v) in expr.e.iter_mut().zip(out.iter()) {
            *dst = v.clamp(-1.0, 1.0);
        }
        expr.yaw = out[EXPRESSION_DIMS].clamp(-MAX_ANGLE, MAX_ANGLE);
        expr.pitch = out[EXPRESSION_DIMS + 1].clamp(-MAX_ANGLE, MAX_ANGLE);
        expr.roll = out[EXPRESSION_DIMS + 2].clamp(-MAX_ANGLE, MAX_ANGLE);
        Ok(expr)
    }

    pub fn estimate(&self, img: &Grid) -> Result<MotionParams> {
        self.world.synth_motion(&self.estimate_expression(img)?)
    }
}

fn expr_vector(e: &ExpressionParams) -> Vec<f64> {
    let mut v = e.e.to_vec();
    v.extend([e.yaw, e.pitch, e.roll]);
    v
}
