use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{
    feature_matching_loss, hinge_d_loss, hinge_g_loss, multistep_lr, perceptual_loss,
    DiscriminatorScores, FeatureExtractor, GanConfig, RandomFeatureStack, DISCRIMINATOR_FACTORS,
};
use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::mapping::AdamW;
use crate::synth::{render_toy, simulate_inference_counterpart, ExpressionParams, SynthWorld};

/// Toy reconstruction run: a per-pixel affine generator restores rendered
/// faces from their degraded counterparts against a linear multiscale critic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToyConfig {
    pub steps: usize,
    pub batch: usize,
    pub resolution: usize,
    pub seed: u64,
    /// The demo runs far fewer steps than a real fine-tune, so it uses its
    /// own learning rates; the schedule shape and betas come from `gan`.
    pub generator_lr: f64,
    pub discriminator_lr: f64,
    pub gan: GanConfig,
}

impl Default for ToyConfig {
    fn default() -> Self {
        Self {
            steps: 200,
            batch: 8,
            resolution: 16,
            seed: 0,
            generator_lr: 1e-2,
            discriminator_lr: 1e-3,
            gan: GanConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ToyRecord {
    pub step: usize,
    pub d_loss: f64,
    pub g_loss: f64,
    pub recon_error: f64,
}

struct Critic {
    /// Per scale: pooled weights followed by one bias.
    params: Vec<f64>,
    offsets: Vec<(usize, usize)>,
}

impl Critic {
    fn new(res: usize) -> Self {
        let mut offsets = Vec::new();
        let mut at = 0;
        for f in DISCRIMINATOR_FACTORS {
            let n = (res / f).max(1).pow(2);
            offsets.push((at, n));
            at += n + 1;
        }
        Self {
            params: vec![0.0; at],
            offsets,
        }
    }

    fn score(&self, scale: usize, pooled: &Grid) -> f64 {
        let (at, n) = self.offsets[scale];
        let w = &self.params[at..at + n];
        w.iter().zip(pooled.as_slice()).map(|(a, b)| a * b).sum::<f64>() + self.params[at + n]
    }

    fn evaluate(&self, imgs: &[Grid]) -> Result<(DiscriminatorScores, Vec<Vec<Grid>>)> {
        let mut scores = Vec::new();
        let mut features = Vec::new();
        let mut pooled_all = Vec::new();
        for (s, f) in DISCRIMINATOR_FACTORS.into_iter().enumerate() {
            let pooled: Vec<Grid> = imgs.iter().map(|g| g.avg_pool(f)).collect();
            scores.push(pooled.iter().map(|p| self.score(s, p)).collect());
            features.push(vec![pooled
                .iter()
                .flat_map(|p| p.as_slice().iter().copied())
                .collect()]);
            pooled_all.push(pooled);
        }
        Ok((DiscriminatorScores::new(scores, features)?, pooled_all))
    }
}

/// Spreads a pooled-grid gradient back over the full-resolution cells.
fn unpool_into(grad: &mut Grid, pooled_grad: &[f64], factor: usize) {
    let (h, w) = grad.dims();
    let pw = (w / factor).max(1);
    let norm = (factor * factor) as f64;
    for r in 0..h {
        for c in 0..w {
            let v = grad.get(r, c) + pooled_grad[(r / factor) * pw + c / factor] / norm;
            grad.set(r, c, v);
        }
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn mean_abs_error(a: &[Grid], b: &[Grid]) -> f64 {
    let n: usize = a.iter().map(|g| g.as_slice().len()).sum();
    a.iter()
        .zip(b)
        .flat_map(|(x, y)| x.as_slice().iter().zip(y.as_slice()))
        .map(|(p, q)| (p - q).abs())
        .sum::<f64>()
        / n as f64
}

/// Runs the adversarial reconstruction demo and returns one record per step.
pub fn run_toy_adversarial(cfg: &ToyConfig) -> Result<Vec<ToyRecord>> {
    cfg.gan.validate()?;
    if cfg.steps == 0 || cfg.batch == 0 || cfg.resolution < 16 {
        return Err(Error::Config(
            "toy run needs steps > 0, batch > 0 and resolution >= 16".into(),
        ));
    }
    let res = cfg.resolution;
    let cells = res * res;
    let world = SynthWorld::published();
    let mut real = Vec::with_capacity(cfg.batch);
    for i in 0..cfg.batch {
        let kp = world.keypoints(&ExpressionParams::sample(cfg.seed.wrapping_add(i as u64)))?;
        real.push(render_toy(&kp, (res, res))?);
    }
    let degraded: Vec<Grid> = real.iter().map(simulate_inference_counterpart).collect();
    let extractor = RandomFeatureStack::new(res, res, cfg.seed ^ 0x5eed);
    let real_layers = real
        .iter()
        .map(|g| extractor.extract(g))
        .collect::<Result<Vec<_>>>()?;

    // Generator: fake = gain * input + offset, per pixel.
    let mut gen = vec![1.0; cells];
    gen.extend(std::iter::repeat(0.0).take(cells));
    let mut critic = Critic::new(res);
    let (b1, b2) = cfg.gan.betas;
    let mut g_opt = AdamW::new(gen.len(), b1, b2, 1e-8, 0.0);
    let mut d_opt = AdamW::new(critic.params.len(), b1, b2, 1e-8, 0.0);
    let generate = |gen: &[f64]| -> Vec<Grid> {
        degraded
            .iter()
            .map(|x| Grid::from_fn(res, res, |r, c| {
                let i = r * res + c;
                gen[i] * x.get(r, c) + gen[cells + i]
            }))
            .collect()
    };

    let b = cfg.batch as f64;
    let n_scales = DISCRIMINATOR_FACTORS.len() as f64;
    let mut history = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let epoch = step * cfg.gan.epochs / cfg.steps;
        let decay = multistep_lr(epoch, 1.0, &cfg.gan.milestones, cfg.gan.gamma)?;

        // Critic update.
        let fake = generate(&gen);
        let (real_d, real_pooled) = critic.evaluate(&real)?;
        let (fake_d, fake_pooled) = critic.evaluate(&fake)?;
        let real_scores = real_d.flat_scores();
        let fake_scores = fake_d.flat_scores();
        let d_loss = hinge_d_loss(&real_scores, &fake_scores)?;
        let n_real = real_scores.len() as f64;
        let n_fake = fake_scores.len() as f64;
        let mut d_grad = vec![0.0; critic.params.len()];
        for (s, &(at, n)) in critic.offsets.iter().enumerate() {
            for (pooled, score, weight, active) in [
                (&real_pooled[s], &real_d.scores()[s], -1.0 / n_real, 1.0),
                (&fake_pooled[s], &fake_d.scores()[s], 1.0 / n_fake, -1.0),
            ] {
                for (p, &d) in pooled.iter().zip(score) {
                    if active * d < 1.0 {
                        for (g, v) in d_grad[at..at + n].iter_mut().zip(p.as_slice()) {
                            *g += weight * v;
                        }
                        d_grad[at + n] += weight;
                    }
                }
            }
        }
        d_opt.step(&mut critic.params, &d_grad, cfg.discriminator_lr * decay)?;

        // Generator update against the refreshed critic.
        let (fake_d, _) = critic.evaluate(&fake)?;
        let mut perceptual = 0.0;
        let mut img_grads: Vec<Grid> = Vec::with_capacity(cfg.batch);
        for (f, rl) in fake.iter().zip(&real_layers) {
            perceptual += perceptual_loss(f, &real[img_grads.len()], &extractor)? / b;
            let fl = extractor.extract(f)?;
            let n_layers = fl.len() as f64;
            let lg: Vec<Vec<f64>> = fl
                .iter()
                .zip(rl)
                .map(|(a, r)| {
                    let k = cfg.gan.lambda_p / (b * n_layers * a.len() as f64);
                    a.iter().zip(r).map(|(x, y)| k * sign(x - y)).collect()
                })
                .collect();
            img_grads.push(extractor.backward(f, &lg)?);
        }
        let feature_match = feature_matching_loss(real_d.features(), fake_d.features())?;
        let fake_scores = fake_d.flat_scores();
        let g_loss = hinge_g_loss(&fake_scores, perceptual, feature_match, &cfg.gan);

        let n_scores = fake_scores.len() as f64;
        for (s, &(at, n)) in critic.offsets.iter().enumerate() {
            let factor = DISCRIMINATOR_FACTORS[s];
            let w = &critic.params[at..at + n];
            let adv: Vec<f64> = w.iter().map(|x| -x / n_scores).collect();
            let rf = &real_d.features()[s][0];
            let ff = &fake_d.features()[s][0];
            let k = cfg.gan.lambda_fm / (n_scales * ff.len() as f64);
            for (i, grad) in img_grads.iter_mut().enumerate() {
                let pooled: Vec<f64> = (0..n)
                    .map(|j| adv[j] + k * sign(ff[i * n + j] - rf[i * n + j]))
                    .collect();
                unpool_into(grad, &pooled, factor);
            }
        }
        let mut g_grad = vec![0.0; gen.len()];
        for (grad, x) in img_grads.iter().zip(&degraded) {
            for i in 0..cells {
                let g = grad.as_slice()[i];
                g_grad[i] += g * x.as_slice()[i];
                g_grad[cells + i] += g;
            }
        }
        g_opt.step(&mut gen, &g_grad, cfg.generator_lr * decay)?;

        let recon_error = mean_abs_error(&generate(&gen), &real);
        if !(d_loss.is_finite() && g_loss.is_finite() && recon_error.is_finite()) {
            return Err(Error::Numeric(format!("non-finite loss at step {step}")));
        }
        history.push(ToyRecord {
            step,
            d_loss,
            g_loss,
            recon_error,
        });
    }
    Ok(history)
}

/// Writes `step,L_D,L_G,recon_error` rows.
pub fn write_history_csv<W: Write>(history: &[ToyRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(["step", "L_D", "L_G", "recon_error"]).map_err(io)?;
    for r in history {
        w.write_record([
            r.step.to_string(),
            r.d_loss.to_string(),
            r.g_loss.to_string(),
            r.recon_error.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush()?;
    Ok(())
}
