//! Finite-difference checks of the mapping-network objective.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use shadow_core::mapping::{
    backward_and_step, feature_adaptation_loss, huber_loss, loss_and_gradient, total_loss,
    OptimizerState, RegressorModel, TrainConfig, TrainingPair,
};
use shadow_core::synth::simulate_inference_counterpart;
use shadow_core::{Grid, NUM_CONTROLS};

const H: f64 = 1e-5;

fn random_instance(seed: u64) -> (RegressorModel, Vec<TrainingPair>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (rng.random_range(3..6), rng.random_range(3..6));
    let hidden: Vec<usize> = if rng.random_bool(0.5) {
        vec![rng.random_range(3..7)]
    } else {
        vec![rng.random_range(3..7), rng.random_range(2..5)]
    };
    let mut model = RegressorModel::new(h, w, &hidden, seed).unwrap();
    for p in model.params_mut() {
        *p += rng.random_range(-0.3..0.3);
    }
    let batch = (0..rng.random_range(2..5))
        .map(|_| {
            let input = Grid::from_fn(h, w, |_, _| rng.random_range(0.0..1.0));
            TrainingPair {
                counterpart: simulate_inference_counterpart(&input),
                input,
                target: (0..NUM_CONTROLS).map(|_| rng.random_range(0.0..1.0)).collect(),
            }
        })
        .collect();
    (model, batch)
}

/// Total loss with the counterpart features pinned to `frozen`.
fn surrogate(
    model: &RegressorModel,
    batch: &[TrainingPair],
    frozen: &[Vec<f64>],
    cfg: &TrainConfig,
) -> f64 {
    let mut acc = 0.0;
    for (pair, target_feat) in batch.iter().zip(frozen) {
        let fwd = model.forward(&pair.input).unwrap();
        acc += huber_loss(&pair.target, &fwd.prediction, cfg.delta).unwrap();
        acc += cfg.lambda_fa * feature_adaptation_loss(&fwd.feature, target_feat).unwrap();
    }
    acc / batch.len() as f64
}

fn central_diff(model: &RegressorModel, f: impl Fn(&RegressorModel) -> f64) -> Vec<f64> {
    let mut probe = model.clone();
    (0..model.param_count())
        .map(|i| {
            let orig = probe.params()[i];
            probe.params_mut()[i] = orig + H;
            let up = f(&probe);
            probe.params_mut()[i] = orig - H;
            let down = f(&probe);
            probe.params_mut()[i] = orig;
            (up - down) / (2.0 * H)
        })
        .collect()
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-300)
}

fn frozen_targets(model: &RegressorModel, batch: &[TrainingPair]) -> Vec<Vec<f64>> {
    batch
        .iter()
        .map(|p| model.features(&p.counterpart).unwrap())
        .collect()
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    for seed in 0..20 {
        let (model, batch) = random_instance(seed);
        // A large weight makes the adaptation term visible in the check.
        for lambda_fa in [5e-4, 0.5] {
            let cfg = TrainConfig {
                lambda_fa,
                ..Default::default()
            };
            let frozen = frozen_targets(&model, &batch);
            let (_, analytic) = loss_and_gradient(&batch, &model, &cfg).unwrap();
            let numeric = central_diff(&model, |m| surrogate(m, &batch, &frozen, &cfg));
            let err = rel_err(&analytic, &numeric);
            assert!(err < 1e-4, "seed {seed} lambda {lambda_fa}: rel err {err}");
        }
    }
}

#[test]
fn no_gradient_flows_through_counterpart_branch() {
    for seed in 100..110 {
        let (model, batch) = random_instance(seed);
        let cfg = TrainConfig {
            lambda_fa: 0.5,
            ..Default::default()
        };
        let frozen = frozen_targets(&model, &batch);
        let (_, analytic) = loss_and_gradient(&batch, &model, &cfg).unwrap();
        let stopped = central_diff(&model, |m| surrogate(m, &batch, &frozen, &cfg));
        let full = central_diff(&model, |m| total_loss(&batch, m, &cfg).unwrap().total);
        // The counterpart branch does depend on the weights...
        let branch: Vec<f64> = full.iter().zip(&stopped).map(|(a, b)| a - b).collect();
        assert!(branch.iter().any(|g| g.abs() > 1e-4), "seed {seed}");
        // ...but none of that dependence reaches the implementation.
        let leak = analytic
            .iter()
            .zip(&stopped)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        assert!(leak < 1e-6, "seed {seed}: leak {leak}");
    }
}

#[test]
fn fa_gradient_is_twice_the_feature_gap() {
    let f = [0.3, -0.2, 0.9];
    let target = [0.1, 0.4, 0.9];
    for (i, g) in shadow_core::mapping::feature_adaptation_grad(&f, &target)
        .into_iter()
        .enumerate()
    {
        let mut up = f;
        up[i] += H;
        let mut down = f;
        down[i] -= H;
        let fd = (feature_adaptation_loss(&up, &target).unwrap()
            - feature_adaptation_loss(&down, &target).unwrap())
            / (2.0 * H);
        assert!((g - fd).abs() < 1e-8);
        assert!((g - 2.0 * (f[i] - target[i])).abs() < 1e-15);
    }
}

#[test]
fn total_loss_recombines_components() {
    let (model, batch) = random_instance(7);
    let cfg = TrainConfig::default();
    let got = total_loss(&batch, &model, &cfg).unwrap();
    let mut hub = 0.0;
    let mut fa = 0.0;
    for p in &batch {
        let a = model.forward(&p.input).unwrap();
        let b = model.forward(&p.counterpart).unwrap();
        hub += huber_loss(&p.target, &a.prediction, 0.01).unwrap();
        fa += feature_adaptation_loss(&a.feature, &b.feature).unwrap();
    }
    let n = batch.len() as f64;
    let expected = hub / n + 5e-4 * fa / n;
    assert!((got.total - expected).abs() < 1e-15);

    let no_fa = TrainConfig {
        lambda_fa: 0.0,
        ..Default::default()
    };
    assert_eq!(total_loss(&batch, &model, &no_fa).unwrap().total, hub / n);
}

#[test]
fn perfect_prediction_and_matching_features_give_zero_loss() {
    let (model, mut batch) = random_instance(8);
    for p in &mut batch {
        p.counterpart = p.input.clone();
        p.target = model.forward(&p.input).unwrap().prediction;
    }
    let loss = total_loss(&batch, &model, &TrainConfig::default()).unwrap();
    assert_eq!(loss.total, 0.0);
}

#[test]
fn perfect_model_step_applies_only_weight_decay() {
    let (mut model, mut batch) = random_instance(9);
    for p in &mut batch {
        p.target = model.forward(&p.input).unwrap().prediction;
    }
    let cfg = TrainConfig {
        lambda_fa: 0.0,
        warmup_fraction: 0.0,
        ..Default::default()
    };
    let before = model.params().to_vec();
    let mut state = OptimizerState::new(&model, &cfg, 10);
    backward_and_step(&mut model, &batch, &cfg, &mut state).unwrap();
    for (a, b) in model.params().iter().zip(&before) {
        assert_eq!(*a, b - cfg.lr * cfg.weight_decay * b);
    }
}

#[test]
fn identical_runs_have_identical_trajectories() {
    let run = || {
        let (mut model, batch) = random_instance(10);
        let cfg = TrainConfig::default();
        let mut state = OptimizerState::new(&model, &cfg, 10);
        let mut traj = Vec::new();
        for _ in 0..10 {
            backward_and_step(&mut model, &batch, &cfg, &mut state).unwrap();
            traj.push(model.params().to_vec());
        }
        traj
    };
    assert_eq!(run(), run());
}
