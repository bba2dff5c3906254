use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::loss::{feature_adaptation_loss, huber_loss, loss_and_gradient, LossBreakdown, TrainingPair};
use super::model::RegressorModel;
use super::optim::AdamW;
use super::schedule::cosine_warmup_lr;

/// Mapping-network training hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    /// Huber threshold.
    pub delta: f64,
    /// Weight of the feature-adaptation term; 0 disables it.
    pub lambda_fa: f64,
    pub warmup_fraction: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            batch: 128,
            epochs: 100,
            delta: 0.01,
            lambda_fa: 5e-4,
            warmup_fraction: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lr", self.lr),
            ("delta", self.delta),
            ("eps", self.eps),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.batch == 0 || self.epochs == 0 {
            return Err(Error::Config("batch and epochs must be positive".into()));
        }
        if !(self.lambda_fa >= 0.0 && self.lambda_fa.is_finite()) {
            return Err(Error::Config(format!("lambda_fa must be >= 0, got {}", self.lambda_fa)));
        }
        if !(0.0..=1.0).contains(&self.warmup_fraction) {
            return Err(Error::Config("warmup_fraction must lie in [0, 1]".into()));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::Config("betas must lie in [0, 1)".into()));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::Config("weight_decay must be >= 0".into()));
        }
        Ok(())
    }

    pub fn steps_per_epoch(&self, samples: usize) -> u64 {
        samples.div_ceil(self.batch) as u64
    }
}

/// Adaptive-moment state plus schedule position.
#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub adam: AdamW,
    pub step: u64,
    pub total_steps: u64,
    pub warmup_steps: u64,
}

impl OptimizerState {
    pub fn new(model: &RegressorModel, cfg: &TrainConfig, total_steps: u64) -> Self {
        Self {
            adam: AdamW::new(model.param_count(), cfg.beta1, cfg.beta2, cfg.eps, cfg.weight_decay),
            step: 0,
            total_steps,
            warmup_steps: (cfg.warmup_fraction * total_steps as f64).round() as u64,
        }
    }

    pub fn current_lr(&self, base_lr: f64) -> Result<f64> {
        cosine_warmup_lr(
            self.step.min(self.total_steps),
            self.total_steps,
            base_lr,
            self.warmup_steps,
        )
    }
}

/// Computes the analytic gradient of the total loss on `batch` and applies
/// one scheduled AdamW update. Returns the pre-update loss.
pub fn backward_and_step(
    model: &mut RegressorModel,
    batch: &[TrainingPair],
    cfg: &TrainConfig,
    state: &mut OptimizerState,
) -> Result<LossBreakdown> {
    let (loss, grad) = loss_and_gradient(batch, model, cfg)?;
    let lr = state.current_lr(cfg.lr)?;
    state
        .adam
        .step(model.params_mut(), &grad, lr)
        .map_err(|e| Error::Numeric(format!("training aborted: {e}")))?;
    state.step += 1;
    Ok(loss)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    /// Mean total loss per epoch.
    pub epoch_loss: Vec<f64>,
    pub steps: u64,
}

/// Full training run with per-epoch shuffling seeded by `cfg.seed`.
pub fn train(
    model: &mut RegressorModel,
    data: &[TrainingPair],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Validation("no training samples".into()));
    }
    let total_steps = cfg.steps_per_epoch(data.len()) * cfg.epochs as u64;
    let mut state = OptimizerState::new(model, cfg, total_steps);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut epoch_loss = Vec::with_capacity(cfg.epochs);
    let mut batch = Vec::with_capacity(cfg.batch);
    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut acc = 0.0;
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch) {
            batch.clear();
            batch.extend(chunk.iter().map(|&i| data[i].clone()));
            acc += backward_and_step(model, &batch, cfg, &mut state)?.total;
            batches += 1;
        }
        epoch_loss.push(acc / batches as f64);
    }
    Ok(TrainReport {
        epoch_loss,
        steps: state.step,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EvalReport {
    /// Mean of `||F(input) - F(counterpart)||_2`.
    pub mean_feature_distance: f64,
    pub huber_on_inputs: f64,
    pub huber_on_counterparts: f64,
    pub fa_loss: f64,
}

pub fn evaluate(model: &RegressorModel, data: &[TrainingPair], delta: f64) -> Result<EvalReport> {
    if data.is_empty() {
        return Err(Error::Validation("no evaluation samples".into()));
    }
    let mut rep = EvalReport {
        mean_feature_distance: 0.0,
        huber_on_inputs: 0.0,
        huber_on_counterparts: 0.0,
        fa_loss: 0.0,
    };
    for pair in data {
        let a = model.forward(&pair.input)?;
        let b = model.forward(&pair.counterpart)?;
        let fa = feature_adaptation_loss(&a.feature, &b.feature)?;
        rep.fa_loss += fa;
        rep.mean_feature_distance += fa.sqrt();
        rep.huber_on_inputs += huber_loss(&pair.target, &a.prediction, delta)?;
        rep.huber_on_counterparts += huber_loss(&pair.target, &b.prediction, delta)?;
    }
    let n = data.len() as f64;
    rep.mean_feature_distance /= n;
    rep.huber_on_inputs /= n;
    rep.huber_on_counterparts /= n;
    rep.fa_loss /= n;
    Ok(rep)
}
