use crate::error::{Error, Result};
use crate::grid::Grid;

use super::model::RegressorModel;
use super::train::TrainConfig;

/// Mean over components of the Huber penalty with threshold `delta`.
pub fn huber_loss(target: &[f64], prediction: &[f64], delta: f64) -> Result<f64> {
    check_lengths(target, prediction, "huber loss")?;
    if delta <= 0.0 {
        return Err(Error::Config(format!("huber threshold must be positive, got {delta}")));
    }
    let sum: f64 = target
        .iter()
        .zip(prediction)
        .map(|(y, p)| {
            let r = (y - p).abs();
            if r <= delta {
                0.5 * r * r
            } else {
                delta * r - 0.5 * delta * delta
            }
        })
        .sum();
    Ok(sum / target.len() as f64)
}

/// Derivative of [`huber_loss`] with respect to each prediction.
pub fn huber_grad(target: &[f64], prediction: &[f64], delta: f64) -> Vec<f64> {
    let n = target.len() as f64;
    target
        .iter()
        .zip(prediction)
        .map(|(y, p)| {
            let r = p - y;
            if r.abs() <= delta {
                r / n
            } else {
                delta * r.signum() / n
            }
        })
        .collect()
}

/// Squared L2 distance between a feature and a frozen target feature.
pub fn feature_adaptation_loss(feature: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(feature, target, "feature adaptation loss")?;
    Ok(feature.iter().zip(target).map(|(a, b)| (a - b).powi(2)).sum())
}

/// Gradient of [`feature_adaptation_loss`] with respect to `feature` only.
pub fn feature_adaptation_grad(feature: &[f64], target: &[f64]) -> Vec<f64> {
    feature.iter().zip(target).map(|(a, b)| 2.0 * (a - b)).collect()
}

fn check_lengths(a: &[f64], b: &[f64], what: &str) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Dimension(format!(
            "{what}: length {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Training image, its generated counterpart, and ground-truth controls.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingPair {
    pub input: Grid,
    pub counterpart: Grid,
    pub target: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub huber: f64,
    pub feature_adaptation: f64,
    pub total: f64,
}

/// `L = L_huber + lambda_fa * L_fa`, each term averaged over the batch.
pub fn total_loss(
    batch: &[TrainingPair],
    model: &RegressorModel,
    cfg: &TrainConfig,
) -> Result<LossBreakdown> {
    if batch.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    let mut out = LossBreakdown::default();
    for pair in batch {
        let fwd = model.forward(&pair.input)?;
        out.huber += huber_loss(&pair.target, &fwd.prediction, cfg.delta)?;
        if cfg.lambda_fa != 0.0 {
            let target = model.features(&pair.counterpart)?;
            out.feature_adaptation += feature_adaptation_loss(&fwd.feature, &target)?;
        }
    }
    finish(&mut out, batch.len(), cfg.lambda_fa);
    Ok(out)
}

fn finish(out: &mut LossBreakdown, n: usize, lambda_fa: f64) {
    out.huber /= n as f64;
    out.feature_adaptation /= n as f64;
    out.total = out.huber + lambda_fa * out.feature_adaptation;
}

/// Loss and its analytic gradient with respect to every parameter.
///
/// Counterpart features are computed with the current weights and then
/// treated as constants: no gradient flows through the target branch.
pub fn loss_and_gradient(
    batch: &[TrainingPair],
    model: &RegressorModel,
    cfg: &TrainConfig,
) -> Result<(LossBreakdown, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Validation("empty batch".into()));
    }
    let spans = model.layer_spans();
    let (head, extractor) = spans.split_last().unwrap();
    let params = model.params();
    let mut grad = vec![0.0; model.param_count()];
    let mut out = LossBreakdown::default();
    let use_fa = cfg.lambda_fa != 0.0;

    for pair in batch {
        let trace = model.trace(&pair.input)?;
        let feature = trace.acts.last().unwrap();
        out.huber += huber_loss(&pair.target, &trace.prediction, cfg.delta)?;

        // Head: sigmoid output layer.
        let d_pred = huber_grad(&pair.target, &trace.prediction, cfg.delta);
        let d_u: Vec<f64> = d_pred
            .iter()
            .zip(&trace.prediction)
            .map(|(g, y)| g * y * (1.0 - y))
            .collect();
        let mut d_act = accumulate_affine(&mut grad, params, head, feature, &d_u);

        if use_fa {
            let target = model.features(&pair.counterpart)?;
            out.feature_adaptation += feature_adaptation_loss(feature, &target)?;
            for (d, g) in d_act.iter_mut().zip(feature_adaptation_grad(feature, &target)) {
                *d += cfg.lambda_fa * g;
            }
        }

        for (l, span) in extractor.iter().enumerate().rev() {
            let act = &trace.acts[l + 1];
            let d_z: Vec<f64> = d_act
                .iter()
                .zip(act)
                .map(|(d, a)| d * (1.0 - a * a))
                .collect();
            d_act = accumulate_affine(&mut grad, params, span, &trace.acts[l], &d_z);
        }
    }

    let n = batch.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    finish(&mut out, batch.len(), cfg.lambda_fa);
    Ok((out, grad))
}

/// Adds the weight/bias gradients of one affine layer and returns the
/// gradient with respect to its input.
fn accumulate_affine(
    grad: &mut [f64],
    params: &[f64],
    span: &super::model::LayerSpan,
    input: &[f64],
    d_out: &[f64],
) -> Vec<f64> {
    let mut d_in = vec![0.0; span.inputs];
    for (o, &d) in d_out.iter().enumerate() {
        grad[span.bias + o] += d;
        if d == 0.0 {
            continue;
        }
        let row = span.weights + o * span.inputs;
        for (i, (g, x)) in grad[row..row + span.inputs].iter_mut().zip(input).enumerate() {
            *g += d * x;
            d_in[i] += d * params[row + i];
        }
    }
    d_in
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn huber_branches() {
        assert_eq!(huber_loss(&[0.3, 0.7], &[0.3, 0.7], 0.01).unwrap(), 0.0);
        let quad = huber_loss(&[0.0], &[0.005], 0.01).unwrap();
        assert!((quad - 1.25e-5).abs() < 1e-18);
        let lin = huber_loss(&[0.0], &[0.1], 0.01).unwrap();
        assert!((lin - 9.5e-4).abs() < 1e-15);
        assert!(huber_loss(&[0.0], &[0.0, 1.0], 0.01).is_err());
    }

    #[test]
    fn huber_continuous_at_threshold() {
        let d = 0.01;
        for sign in [1.0, -1.0] {
            let below = huber_loss(&[0.0], &[sign * (d - 1e-9)], d).unwrap();
            let above = huber_loss(&[0.0], &[sign * (d + 1e-9)], d).unwrap();
            assert!((below - above).abs() < 1e-10);
            let gb = huber_grad(&[0.0], &[sign * (d - 1e-9)], d)[0];
            let ga = huber_grad(&[0.0], &[sign * (d + 1e-9)], d)[0];
            assert!((gb - ga).abs() < 1e-8);
        }
    }

    #[test]
    fn fa_loss_values() {
        assert_eq!(feature_adaptation_loss(&[0.2, -0.4], &[0.2, -0.4]).unwrap(), 0.0);
        assert_eq!(feature_adaptation_loss(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 2.0);
        assert_eq!(feature_adaptation_grad(&[1.0, 0.0], &[0.0, 1.0]), vec![2.0, -2.0]);
        assert!(feature_adaptation_loss(&[1.0], &[0.0, 1.0]).is_err());
    }

    #[test]
    fn empty_batch_rejected() {
        let model = RegressorModel::new(4, 4, &[3], 0).unwrap();
        let cfg = TrainConfig::default();
        assert!(matches!(total_loss(&[], &model, &cfg), Err(Error::Validation(_))));
        assert!(loss_and_gradient(&[], &model, &cfg).is_err());
    }
}
