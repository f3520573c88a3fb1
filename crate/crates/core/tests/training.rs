use dlu_core::train::*;
use dlu_core::*;

fn short(steps: usize) -> TrainConfig {
    TrainConfig {
        steps,
        eval_interval: 5,
        ..TrainConfig::tuned()
    }
}

#[test]
fn zero_learning_rate_keeps_eval_constant() {
    let task = SynthTask::default();
    let cfg = TrainConfig {
        lr: 0.0,
        ..short(10)
    };
    let out = train(&task, "dlu", &task.default_model(), &cfg).unwrap();
    assert_eq!(out.final_eval, out.initial_eval);
    assert!(out
        .curve
        .iter()
        .filter_map(|r| r.eval_loss)
        .all(|e| e == out.initial_eval));
}

#[test]
fn runs_are_reproducible() {
    let task = SynthTask::default();
    let a = train(&task, "dlu", &task.default_model(), &short(15)).unwrap();
    let b = train(&task, "dlu", &task.default_model(), &short(15)).unwrap();
    assert_eq!(a.curve, b.curve);
    let c = train(
        &task,
        "dlu",
        &task.default_model(),
        &TrainConfig {
            seed: 2,
            ..short(15)
        },
    )
    .unwrap();
    assert_ne!(a.curve, c.curve);
}

#[test]
fn curve_csv_layout() {
    let task = SynthTask::default();
    let out = train(&task, "carafe", &task.default_model(), &short(5)).unwrap();
    let csv = curve_csv(&out.curve);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "# dlu-loss-curve v1");
    assert_eq!(lines[1], "step,train_loss,eval_loss");
    assert_eq!(lines.len(), 2 + 5);
    assert!(lines[6].split(',').nth(2).is_some_and(|e| !e.is_empty()));
}

#[test]
fn fixed_methods_cannot_train() {
    let task = SynthTask::default();
    assert!(matches!(
        train(&task, "nearest", &task.default_model(), &short(1)),
        Err(Error::Unsupported { .. })
    ));
    let bad = UpsampleConfig {
        c_in: 3,
        ..task.default_model()
    };
    assert!(matches!(
        train(&task, "dlu", &bad, &short(1)),
        Err(Error::Config(_))
    ));
}

#[test]
fn divergence_is_reported() {
    let task = SynthTask::default();
    let cfg = TrainConfig {
        lr: 1e12,
        momentum: 0.0,
        ..short(20)
    };
    assert!(matches!(
        train(&task, "carafe", &task.default_model(), &cfg),
        Err(Error::Diverged { .. })
    ));
}

#[test]
fn mse_matches_independent_sum() {
    let mut rng = Rng::new(3);
    let a: Tensor = random_uniform(&mut rng, (2, 3, 4, 5), 0.0, 1.0);
    let b: Tensor = random_uniform(&mut rng, (2, 3, 4, 5), 0.0, 1.0);
    let (loss, grad) = mse_loss(&a, &b).unwrap();
    let mut want = 0.0;
    for (x, y) in a.data().iter().zip(b.data()) {
        want += (x - y) * (x - y);
    }
    assert!((loss - want / 120.0).abs() < 1e-12);
    assert!((grad.data()[7] - 2.0 * (a.data()[7] - b.data()[7]) / 120.0).abs() < 1e-15);
}

#[test]
fn offset_branch_receives_updates() {
    let task = SynthTask::default();
    let out = train(&task, "dlu", &task.default_model(), &short(10)).unwrap();
    let (_, offset) = out.model.layers()[2];
    assert!(offset.weights.data().iter().any(|&v| v != 0.0));
}
