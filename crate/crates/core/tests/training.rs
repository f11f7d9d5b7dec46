// SPDX-License-Identifier: MIT OR Apache-2.0

use persuasion_probe::metrics::auroc;
use persuasion_probe::probe::{accuracy, gradients, objective, Optimizer};
use persuasion_probe::{predict, save_probe, train, ProbeModel, Task, TrainConfig};
use persuasion_probe_testkit::{fixtures, oracle};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SEED: u64 = 20_240_611;

fn held_out_auroc(probe: &ProbeModel, data: &persuasion_probe::Dataset) -> f64 {
    let scores: Vec<f64> = (0..data.len())
        .map(|i| predict(probe, data.x(i)).unwrap().get(1))
        .collect();
    let labels: Vec<bool> = data.labels().iter().map(|&l| l == 1).collect();
    auroc(&scores, &labels).unwrap()
}

#[test]
fn gaussian_fixture_separates() {
    let train_set = fixtures::gaussian(200, 8, 2.0, 0.5, SEED);
    let test_set = fixtures::gaussian(200, 8, 2.0, 0.5, SEED + 1);
    let t = train(&train_set, Task::Persuasion, &TrainConfig::default()).unwrap();
    assert_eq!(t.loss_curve.len(), 200);
    assert!(accuracy(&t.probe, &train_set).unwrap() >= 0.99);
    assert!(held_out_auroc(&t.probe, &test_set) >= 0.99);
    assert!(t.loss_curve.last().unwrap() < &t.loss_curve[0]);
}

#[test]
fn training_is_deterministic() {
    let data = fixtures::gaussian(50, 8, 2.0, 0.5, SEED);
    let cfg = TrainConfig {
        batch_size: Some(16),
        seed: 7,
        ..TrainConfig::default()
    };
    let a = train(&data, Task::Persuasion, &cfg).unwrap();
    let b = train(&data, Task::Persuasion, &cfg).unwrap();
    assert_eq!(save_probe(&a.probe).unwrap(), save_probe(&b.probe).unwrap());
    assert_eq!(a.loss_curve, b.loss_curve);

    let other = train(&data, Task::Persuasion, &TrainConfig { seed: 8, ..cfg }).unwrap();
    assert_ne!(a.loss_curve, other.loss_curve);
}

#[test]
fn matches_newton_logistic_regression() {
    // With a ridge penalty the optimum is unique. A binary softmax probe
    // penalized by λ/2·‖W‖² is logistic regression in v = w₁ − w₀ with
    // penalty λ/4·‖v‖².
    let data = fixtures::gaussian(100, 8, 1.0, 1.0, SEED);
    let lambda = 0.1;
    let cfg = TrainConfig {
        learning_rate: 0.2,
        optimizer: Optimizer::Sgd,
        epochs: 4000,
        l2_penalty: lambda,
        ..TrainConfig::default()
    };
    let t = train(&data, Task::Persuasion, &cfg).unwrap();
    let (v, c) = oracle::irls_logistic(&data, lambda / 4.0, 25);

    let w = t.probe.weights();
    let d = data.dim();
    for j in 0..d {
        let ours = w[d + j] - w[j];
        assert!((ours - v[j]).abs() < 1e-6, "v[{j}]: {ours} vs {}", v[j]);
    }
    let b = t.probe.bias();
    assert!((b[1] - b[0] - c).abs() < 1e-6);

    for i in 0..data.len() {
        let z: f64 = v.iter().zip(data.x(i)).map(|(a, x)| a * x).sum::<f64>() + c;
        let p = predict(&t.probe, data.x(i)).unwrap().get(1);
        assert!((p - oracle::sigmoid(z)).abs() < 1e-6);
    }
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    for instance in 0..50 {
        let c = if instance % 2 == 0 { 2 } else { 3 };
        let task = if c == 2 {
            Task::Persuasion
        } else {
            Task::Strategy
        };
        let d = 16;
        let data = fixtures::random_dataset(&mut rng, 8, d, c);
        let w: Vec<f64> = (0..c * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..c).map(|_| rng.random_range(-1.0..1.0)).collect();
        let probe = ProbeModel::with_params(task, d, w, b).unwrap();
        let l2 = if instance % 3 == 0 { 0.05 } else { 0.0 };

        let g = gradients(&probe, &data, l2).unwrap();
        let (nw, nb) = oracle::numeric_gradient(&probe, 1e-5, |p| oracle::objective(p, &data, l2));
        for (a, n) in g.weights.iter().chain(&g.bias).zip(nw.iter().chain(&nb)) {
            let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-8);
            assert!(rel < 1e-4, "instance {instance}: analytic {a}, numeric {n}");
        }
        let lib = objective(&probe, &data, l2).unwrap();
        assert!((lib - oracle::objective(&probe, &data, l2)).abs() < 1e-12);
    }
}

#[test]
fn small_step_sgd_never_increases_loss() {
    let data = fixtures::gaussian(200, 8, 2.0, 0.5, SEED);
    let cfg = TrainConfig {
        learning_rate: 1e-4,
        optimizer: Optimizer::Sgd,
        epochs: 100,
        ..TrainConfig::default()
    };
    let t = train(&data, Task::Persuasion, &cfg).unwrap();
    for w in t.loss_curve.windows(2) {
        assert!(w[1] <= w[0], "loss rose from {} to {}", w[0], w[1]);
    }
}

#[test]
fn three_class_training() {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut data = persuasion_probe::Dataset::new(3, 4).unwrap();
    for i in 0..150 {
        let y = i % 3;
        let mut x: Vec<f64> = (0..4).map(|_| rng.random_range(-0.3..0.3)).collect();
        x[y] += 2.0;
        data.push_anonymous(&x, y).unwrap();
    }
    let cfg = TrainConfig {
        learning_rate: 1e-2,
        ..TrainConfig::default()
    };
    let t = train(&data, Task::Strategy, &cfg).unwrap();
    assert_eq!(accuracy(&t.probe, &data).unwrap(), 1.0);
}
