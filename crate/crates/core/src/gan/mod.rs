//! Adversarial fine-tuning objectives: hinge losses, perceptual and
//! feature-matching terms, and the step-decay learning-rate schedule.

mod extractor;
mod toy;

pub use extractor::{FeatureExtractor, IdentityExtractor, RandomFeatureStack};
pub use toy::{run_toy_adversarial, write_history_csv, ToyConfig, ToyRecord};

use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};
use crate::grid::Grid;

/// Downsampling factors of the multiscale discriminator (scales 1, 1/2, 1/4, 1/8).
pub const DISCRIMINATOR_FACTORS: [usize; 4] = [1, 2, 4, 8];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GanConfig {
    pub lambda_p: f64,
    pub lambda_fm: f64,
    pub lr: f64,
    pub betas: (f64, f64),
    pub milestones: Vec<usize>,
    pub gamma: f64,
    pub epochs: usize,
}

impl Default for GanConfig {
    fn default() -> Self {
        Self {
            lambda_p: 10.0,
            lambda_fm: 10.0,
            lr: 2e-5,
            betas: (0.5, 0.999),
            milestones: vec![12, 18],
            gamma: 0.1,
            epochs: 30,
        }
    }
}

impl GanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lambda_p < 0.0 || self.lambda_fm < 0.0 {
            return Err(Error::Config("loss weights must be non-negative".into()));
        }
        if !(self.lr > 0.0) || !(self.gamma > 0.0) {
            return Err(Error::Config("lr and gamma must be positive".into()));
        }
        let (b1, b2) = self.betas;
        if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        check_sorted(&self.milestones)
    }
}

/// Discriminator outputs for one batch: `scores[s][i]` is the score of sample
/// `i` at scale `s`, and `features[s]` holds that scale's intermediate maps,
/// each flattened over the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscriminatorScores {
    scores: Vec<Vec<f64>>,
    features: Vec<Vec<Vec<f64>>>,
}

impl DiscriminatorScores {
    pub fn new(scores: Vec<Vec<f64>>, features: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let n = DISCRIMINATOR_FACTORS.len();
        if scores.len() != n || features.len() != n {
            return Err(Error::Dimension(format!(
                "expected {n} scales, got {} score / {} feature lists",
                scores.len(),
                features.len()
            )));
        }
        for s in &scores {
            if s.is_empty() {
                return Err(Error::Validation("empty score array".into()));
            }
            ensure_finite(s, "discriminator score")?;
        }
        for f in features.iter().flatten() {
            ensure_finite(f, "discriminator feature")?;
        }
        Ok(Self { scores, features })
    }

    pub fn scores(&self) -> &[Vec<f64>] {
        &self.scores
    }

    pub fn features(&self) -> &[Vec<Vec<f64>>] {
        &self.features
    }

    /// Every score across scales, scale-major.
    pub fn flat_scores(&self) -> Vec<f64> {
        self.scores.iter().flatten().copied().collect()
    }
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// `mean(max(0, 1 - D(real))) + mean(max(0, 1 + D(fake)))`.
pub fn hinge_d_loss(real_scores: &[f64], fake_scores: &[f64]) -> Result<f64> {
    if real_scores.is_empty() || fake_scores.is_empty() {
        return Err(Error::Validation("hinge loss needs non-empty scores".into()));
    }
    let real: Vec<f64> = real_scores.iter().map(|d| (1.0 - d).max(0.0)).collect();
    let fake: Vec<f64> = fake_scores.iter().map(|d| (1.0 + d).max(0.0)).collect();
    Ok(mean(&real) + mean(&fake))
}

/// Generator objective `-mean(D(fake)) + lambda_p * L_p + lambda_fm * L_fm`.
/// An empty score slice contributes nothing to the adversarial term.
pub fn hinge_g_loss(fake_scores: &[f64], perceptual: f64, feature_match: f64, cfg: &GanConfig) -> f64 {
    let adv = if fake_scores.is_empty() { 0.0 } else { -mean(fake_scores) };
    adv + cfg.lambda_p * perceptual + cfg.lambda_fm * feature_match
}

fn mean_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64
}

/// L1 distance between extractor features, averaged over layers.
pub fn perceptual_loss(a: &Grid, b: &Grid, extractor: &dyn FeatureExtractor) -> Result<f64> {
    if a.dims() != b.dims() {
        return Err(Error::Dimension(format!(
            "perceptual loss on {:?} vs {:?}",
            a.dims(),
            b.dims()
        )));
    }
    let fa = extractor.extract(a)?;
    let fb = extractor.extract(b)?;
    if fa.is_empty() {
        return Err(Error::Validation("extractor produced no layers".into()));
    }
    Ok(fa.iter().zip(&fb).map(|(x, y)| mean_abs_diff(x, y)).sum::<f64>() / fa.len() as f64)
}

/// L1 distance between intermediate discriminator maps: mean over the maps of
/// each scale, then mean over scales. Arguments are `[scale][layer][value]`.
pub fn feature_matching_loss(real: &[Vec<Vec<f64>>], fake: &[Vec<Vec<f64>>]) -> Result<f64> {
    if real.is_empty() || real.len() != fake.len() {
        return Err(Error::Dimension(format!(
            "feature structure has {} vs {} scales",
            real.len(),
            fake.len()
        )));
    }
    let mut total = 0.0;
    for (s, (rs, fs)) in real.iter().zip(fake).enumerate() {
        if rs.is_empty() || rs.len() != fs.len() {
            return Err(Error::Dimension(format!(
                "scale {s} has {} vs {} feature maps",
                rs.len(),
                fs.len()
            )));
        }
        let mut scale_sum = 0.0;
        for (l, (r, f)) in rs.iter().zip(fs).enumerate() {
            if r.len() != f.len() {
                return Err(Error::Dimension(format!(
                    "scale {s} layer {l}: {} vs {} values",
                    r.len(),
                    f.len()
                )));
            }
            scale_sum += mean_abs_diff(r, f);
        }
        total += scale_sum / rs.len() as f64;
    }
    Ok(total / real.len() as f64)
}

fn check_sorted(milestones: &[usize]) -> Result<()> {
    if milestones.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config(format!(
            "milestones must be ascending, got {milestones:?}"
        )));
    }
    Ok(())
}

/// Step decay: `base_lr * gamma^k` where `k` counts milestones `<= epoch`.
pub fn multistep_lr(epoch: usize, base_lr: f64, milestones: &[usize], gamma: f64) -> Result<f64> {
    check_sorted(milestones)?;
    let k = milestones.iter().filter(|&&m| m <= epoch).count();
    Ok(base_lr * gamma.powi(k as i32))
}
