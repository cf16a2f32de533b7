mod common;

use uv3_nn::ddpm::DdpmSchedule;
use uv3_nn::{train, DenoiserConfig, DenoiserParams, Error, TrainConfig};

fn tiny_shape() -> uv3_nn::TrainingShape {
    common::toy_shape(&common::tiny_config(), 60)
}

#[test]
fn learning_rate_schedule() {
    let cfg = TrainConfig {
        steps: 1000,
        lr: 2e-3,
        warmup: 100,
        ..TrainConfig::default()
    };
    assert!((cfg.lr_at(0) - 2e-5).abs() < 1e-18);
    assert!((cfg.lr_at(99) - 2e-3).abs() < 1e-18);
    assert!((cfg.lr_at(100) - 2e-3).abs() < 1e-18);
    assert!((cfg.lr_at(550) - 1e-3).abs() < 1e-12);
    assert!(cfg.lr_at(999) < 1e-7);
    assert!((1..1000).all(|s| s < 100 || cfg.lr_at(s) <= cfg.lr_at(s - 1)));
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let shape = tiny_shape();
    let init = DenoiserParams::init(&common::tiny_config(), 1).unwrap();
    let mut params = init.clone();
    let cfg = TrainConfig {
        steps: 3,
        lr: 0.0,
        warmup: 1,
        ..TrainConfig::default()
    };
    train(&mut params, std::slice::from_ref(&shape), &DdpmSchedule::default(), &cfg).unwrap();
    for ((_, a), (_, b)) in init.iter().zip(params.iter()) {
        assert!(a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits()));
    }
}

#[test]
fn training_is_deterministic() {
    let shape = tiny_shape();
    let cfg = TrainConfig {
        steps: 6,
        lr: 1e-3,
        warmup: 2,
        resample_every: 3,
        seed: 9,
        ..TrainConfig::default()
    };
    let run = || {
        let mut p = DenoiserParams::init(&common::tiny_config(), 2).unwrap();
        let r = train(&mut p, std::slice::from_ref(&shape), &DdpmSchedule::default(), &cfg).unwrap();
        (p, r.losses)
    };
    let (pa, la) = run();
    let (pb, lb) = run();
    assert_eq!(la, lb);
    assert_eq!(pa, pb);
}

#[test]
fn divergence_aborts() {
    let shape = tiny_shape();
    let mut params = DenoiserParams::init(&common::tiny_config(), 3).unwrap();
    let cfg = TrainConfig {
        steps: 20,
        lr: 1e-3,
        warmup: 1,
        divergence_factor: 1e-6,
        ..TrainConfig::default()
    };
    let err = train(&mut params, std::slice::from_ref(&shape), &DdpmSchedule::default(), &cfg).unwrap_err();
    assert!(matches!(err, Error::Diverged { step: 0, .. }), "{err}");
    assert!(err.is_numerical());
    assert!(train(&mut params, &[], &DdpmSchedule::default(), &cfg).is_err());
}

#[test]
fn toy_training_halves_the_loss() {
    let cfg = DenoiserConfig::toy();
    let shape = common::toy_shape(&cfg, 300);
    let mut params = DenoiserParams::init(&cfg, 1).unwrap();
    let tc = TrainConfig {
        steps: 200,
        lr: 1e-3,
        warmup: 20,
        seed: 3,
        ..TrainConfig::default()
    };
    let report = train(&mut params, std::slice::from_ref(&shape), &DdpmSchedule::default(), &tc).unwrap();
    // the output layer starts at zero, so the first loss is the noise energy
    assert!((report.losses[0] - 1.0).abs() < 0.25, "initial {}", report.losses[0]);
    let initial = report.window_mean(0, 10);
    let last = report.window_mean(150, 50);
    println!("initial {initial:.4}, final {last:.4}");
    assert!(last < 0.5 * initial);
}
