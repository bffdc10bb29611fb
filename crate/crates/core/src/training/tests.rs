use super::*;
use crate::datapipe::Splits;
use crate::models::{ModelKind, ModelSpec};
use crate::numerics::{grad_check, GradCheckOptions, Rng};
use crate::synthgen::{generate_task, labelize, SynthConfig};

fn small_task(n: usize, seed: u64) -> Splits {
    let cfg = SynthConfig {
        t_len: 8,
        d: 3,
        l: 3,
        n_train: n,
        n_val: n,
        n_test: n,
    };
    generate_task(&cfg, 0.3, 0, seed).unwrap().splits
}

#[test]
fn mse_examples() {
    assert_eq!(
        mse_loss(&[1.0, 2.0], &[1.0, 2.0], &[true, true]).unwrap(),
        0.0
    );
    assert_eq!(
        mse_loss(&[1.0, 3.0], &[0.0, 0.0], &[true, true]).unwrap(),
        5.0
    );
    assert_eq!(
        mse_loss(&[100.0, 3.0], &[0.0, 0.0], &[false, true]).unwrap(),
        9.0
    );
    assert!(mse_loss(&[1.0], &[0.0], &[false]).is_err());
}

#[test]
fn xent_examples() {
    assert_eq!(xent_target_replication(&[[0.0, 1.0]; 4], 1).unwrap(), 0.0);
    assert!((xent_target_replication(&[[0.5, 0.5]; 3], 0).unwrap() - 2f64.ln()).abs() < 1e-15);
    let v = xent_target_replication(&[[0.1, 0.9], [0.2, 0.8]], 1).unwrap();
    assert!((v - 0.164252).abs() < 1e-6);
    assert!((v + (0.9f64.ln() + 0.8f64.ln()) / 2.0).abs() < 1e-15);
    // zero probability on the true class is floored, not infinite
    assert!((xent_target_replication(&[[1.0, 0.0]], 1).unwrap() - (-PROB_FLOOR.ln())).abs() < 1e-9);
}

#[test]
fn smoothness_examples() {
    let constant = Tensor::matrix(4, 2, vec![0.3, 0.7, 0.3, 0.7, 0.3, 0.7, 0.3, 0.7]).unwrap();
    assert!((smoothness_penalty(&constant).unwrap() - 3.0).abs() < 1e-12);
    let orth = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    assert_eq!(smoothness_penalty(&orth).unwrap(), 0.0);
    let half = Tensor::matrix(2, 2, vec![1.0, 0.0, 0.5, 0.5]).unwrap();
    assert!((smoothness_penalty(&half).unwrap() - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-6);
    assert!(smoothness_penalty(&Tensor::matrix(1, 2, vec![0.5, 0.5]).unwrap()).is_err());
    assert!(smoothness_penalty(&Tensor::matrix(2, 2, vec![0.0, 0.0, 0.5, 0.5]).unwrap()).is_err());
}

#[test]
fn smoothness_gradient_checks() {
    let mut rng = Rng::new(4);
    let vals: Vec<f64> = (0..18).map(|_| rng.uniform_range(0.05, 1.0)).collect();
    let lam = Tensor::matrix(6, 3, vals.clone()).unwrap();
    let (_, g) = smoothness_penalty_grad(&lam).unwrap();
    let rep = grad_check(
        |v| smoothness_penalty(&Tensor::matrix(6, 3, v.to_vec())?),
        &vals,
        &g,
        &GradCheckOptions::default(),
    )
    .unwrap();
    assert!(rep.max_rel_error <= 1e-6, "{rep:?}");
}

fn full_spec(kind: ModelKind, task: Task) -> ModelSpec {
    let s = ModelSpec::new(kind, 3, 4, 5, task).with_seed(2);
    match kind {
        ModelKind::ShiftLstm => s.with_k(3),
        ModelKind::MixLstm => s.with_k(2),
        _ => s,
    }
}

fn tiny_records(task: Task, rng: &mut Rng) -> Vec<Record> {
    use crate::datapipe::Target;
    (0..4)
        .map(|i| Record {
            id: i.to_string(),
            x: (0..5)
                .map(|_| (0..3).map(|_| rng.uniform_range(-1.0, 1.0)).collect())
                .collect(),
            y: match task {
                Task::Regression => Target::Sequence((0..3).map(|_| rng.normal()).collect()),
                Task::Classification => Target::Label((i % 2) as u8),
            },
            mask: None,
        })
        .collect()
}

#[test]
fn full_objective_passes_grad_check() {
    for seed in 0..3 {
        let mut rng = Rng::new(seed);
        for kind in ModelKind::ALL {
            for task in [Task::Regression, Task::Classification] {
                let model = Model::init(full_spec(kind, task).with_seed(seed)).unwrap();
                let recs = tiny_records(task, &mut rng);
                let refs: Vec<&Record> = recs.iter().collect();
                let (_, g) = objective_and_gradient(&model, &refs, 0.1).unwrap();
                let rep = grad_check(
                    |p| Ok(objective(&model.with_params(p)?, &refs, 0.1)?.total),
                    model.params(),
                    &g,
                    &GradCheckOptions::default(),
                )
                .unwrap();
                assert!(rep.max_rel_error <= 1e-4, "{kind} {task}: {rep:?}");
                assert!(rep.noise_limited_max_abs <= 1e-9, "{kind} {task}: {rep:?}");
            }
        }
    }
}

#[test]
fn zero_alpha_is_plain_loss() {
    let mut rng = Rng::new(1);
    let model = Model::init(full_spec(ModelKind::MixLstm, Task::Classification)).unwrap();
    let recs = tiny_records(Task::Classification, &mut rng);
    let refs: Vec<&Record> = recs.iter().collect();
    let o = objective(&model, &refs, 0.0).unwrap();
    assert_eq!(o.total, o.data_loss);
    assert!(o.smoothness > 0.0);
    let o2 = objective(&model, &refs, 0.5).unwrap();
    assert_eq!(o2.total, o.data_loss - 0.5 * o.smoothness);
}

#[test]
fn regression_objective_matches_mse_loss() {
    let mut rng = Rng::new(3);
    let model = Model::init(full_spec(ModelKind::Lstm, Task::Regression)).unwrap();
    let recs = tiny_records(Task::Regression, &mut rng);
    let refs: Vec<&Record> = recs.iter().collect();
    let o = objective(&model, &refs, 0.0).unwrap();
    let xs: Vec<&[Vec<f64>]> = recs.iter().map(|r| r.x.as_slice()).collect();
    let preds: Vec<f64> = model.scores(&xs).unwrap().concat();
    let targets: Vec<f64> = recs
        .iter()
        .flat_map(|r| {
            let mut v = vec![0.0; 2];
            v.extend(r.targets().unwrap());
            v
        })
        .collect();
    let mask: Vec<bool> = (0..preds.len()).map(|i| i % 5 >= 2).collect();
    assert!((o.data_loss - mse_loss(&preds, &targets, &mask).unwrap()).abs() < 1e-12);
}

#[test]
fn early_stopping_contract() {
    let s = small_task(20, 1);
    let spec = ModelSpec::new(ModelKind::Lstm, 3, 4, 8, Task::Regression);
    let cfg = TrainConfig {
        lr: 0.0,
        max_epochs: 50,
        ..Default::default()
    };
    let (model, hist) = train(spec, &s.train, &s.val, &cfg).unwrap();
    assert_eq!(hist.epochs.len(), 6);
    assert_eq!(hist.best_epoch, 1);
    assert_eq!(hist.stop, StopReason::Patience);
    assert_eq!((hist.lr, hist.patience), (0.0, 5));
    assert_eq!(model.params(), Model::init(spec).unwrap().params());

    let defaults = TrainConfig::default();
    assert_eq!(
        (defaults.lr, defaults.patience, defaults.batch_size),
        (0.001, 5, 100)
    );
}

#[test]
fn returns_best_epoch_parameters() {
    let s = small_task(60, 2);
    let spec = ModelSpec::new(ModelKind::MixLstm, 3, 6, 8, Task::Regression)
        .with_k(2)
        .with_seed(3);
    let cfg = TrainConfig {
        lr: 0.05,
        batch_size: 10,
        max_epochs: 15,
        patience: 3,
        ..Default::default()
    };
    let (model, hist) = train(spec, &s.train, &s.val, &cfg).unwrap();
    let best = hist
        .epochs
        .iter()
        .map(|e| e.val_metric)
        .fold(f64::INFINITY, f64::min);
    assert_eq!(hist.best_metric, best);
    assert_eq!(hist.epochs[hist.best_epoch - 1].val_metric, best);
    assert_eq!(
        SelectionMetric::ValMse.measure(&model, &s.val).unwrap(),
        best
    );
    assert_eq!(model.training.best_epoch, Some(hist.best_epoch));
}

#[test]
fn simplex_holds_after_every_step() {
    let s = small_task(30, 3);
    let spec = ModelSpec::new(ModelKind::MixLstm, 3, 4, 8, Task::Regression).with_k(3);
    let cfg = TrainConfig {
        lr: 0.05,
        batch_size: 5,
        max_epochs: 4,
        alpha: 0.5,
        ..Default::default()
    };
    let mut steps = 0;
    train_with_observer(spec, &s.train, &s.val, &cfg, &mut |ev| {
        let lam = ev.model.mixing_coefficients().unwrap();
        for t in 0..lam.rows() {
            assert!((lam.row(t).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(lam.row(t).iter().all(|&v| v > 0.0));
        }
        steps += 1;
        Ok(())
    })
    .unwrap();
    assert!(steps >= 6);
}

#[test]
fn divergence_is_reported_with_position() {
    let s = small_task(20, 4);
    let spec = ModelSpec::new(ModelKind::Nn, 3, 4, 8, Task::Regression);
    let cfg = TrainConfig {
        lr: 1e300,
        batch_size: 5,
        ..Default::default()
    };
    match train(spec, &s.train, &s.val, &cfg) {
        Err(Error::Numeric(m)) => assert!(m.contains("epoch"), "{m}"),
        other => panic!(
            "expected a numeric failure, got {:?}",
            other.map(|(_, h)| h)
        ),
    }
}

#[test]
fn mismatched_data_is_rejected() {
    let s = small_task(5, 5);
    let spec = ModelSpec::new(ModelKind::Lstm, 4, 4, 8, Task::Regression);
    assert!(matches!(
        train(spec, &s.train, &s.val, &TrainConfig::default()),
        Err(Error::InvalidArgument(_))
    ));
    let spec = ModelSpec::new(ModelKind::Lstm, 3, 4, 8, Task::Classification);
    assert!(train(spec, &s.train, &s.val, &TrainConfig::default()).is_err());
}

#[test]
fn training_is_deterministic() {
    let s = small_task(30, 6);
    let spec = ModelSpec::new(ModelKind::ShiftLstm, 3, 4, 8, Task::Regression)
        .with_k(2)
        .with_seed(9);
    let cfg = TrainConfig {
        lr: 0.01,
        batch_size: 7,
        max_epochs: 3,
        seed: 4,
        ..Default::default()
    };
    let (a, ha) = train(spec, &s.train, &s.val, &cfg).unwrap();
    let (b, hb) = train(spec, &s.train, &s.val, &cfg).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        serde_json::to_string(&ha).unwrap(),
        serde_json::to_string(&hb).unwrap()
    );
}

#[test]
fn overfits_a_tiny_set() {
    let s = small_task(10, 7);
    let spec = ModelSpec::new(ModelKind::MixLstm, 3, 16, 8, Task::Regression)
        .with_k(2)
        .with_seed(1);
    let cfg = TrainConfig {
        lr: 0.06,
        batch_size: 10,
        max_epochs: 500,
        patience: 500,
        ..Default::default()
    };
    let (model, _) = train(spec, &s.train, &s.train, &cfg).unwrap();
    let mse = SelectionMetric::ValMse.measure(&model, &s.train).unwrap();
    assert!(mse <= 1e-2, "train MSE {mse}");
}

#[test]
fn classification_training_runs() {
    let s = labelize(&small_task(40, 8)).unwrap();
    let spec =
        ModelSpec::new(ModelKind::LstmTe, 3, 4, 8, Task::Classification).with_layer_norm(true);
    let cfg = TrainConfig {
        lr: 0.01,
        batch_size: 10,
        max_epochs: 3,
        ..Default::default()
    };
    let (_, hist) = train(spec, &s.train, &s.val, &cfg).unwrap();
    assert_eq!(hist.metric, SelectionMetric::ValAuroc);
    assert!(hist
        .epochs
        .iter()
        .all(|e| (0.0..=1.0).contains(&e.val_metric)));
}

#[test]
fn search_single_trial_and_determinism() {
    let s = small_task(20, 9);
    let spec = ModelSpec::new(ModelKind::Lstm, 3, 4, 8, Task::Regression);
    let base = TrainConfig {
        max_epochs: 2,
        batch_size: 10,
        ..Default::default()
    };
    let space = SearchSpace {
        hidden: vec![2, 3, 5],
        ..Default::default()
    };
    let one = random_search(spec, &space, 1, &base, &s.train, &s.val, &Rng::new(1)).unwrap();
    assert_eq!(one.leaderboard.len(), 1);
    let (m, _) = one.best.unwrap();
    assert_eq!(m.spec().hidden, one.leaderboard[0].config.hidden);

    let a = sample_trials(
        &SearchSpace::synthetic_hidden(),
        40,
        32,
        &base,
        &Rng::new(5),
    );
    let b = sample_trials(
        &SearchSpace::synthetic_hidden(),
        40,
        32,
        &base,
        &Rng::new(5),
    );
    assert_eq!(a, b);
    assert!(a
        .iter()
        .all(|t| SearchSpace::synthetic_hidden().hidden.contains(&t.hidden)));
}

#[test]
fn search_isolates_failures() {
    let s = small_task(20, 10);
    let spec = ModelSpec::new(ModelKind::Nn, 3, 4, 8, Task::Regression);
    let base = TrainConfig {
        max_epochs: 2,
        batch_size: 10,
        ..Default::default()
    };
    let space = SearchSpace {
        lr: vec![1e-3, 1e300],
        ..Default::default()
    };
    // find a sweep seed whose two trials draw different learning rates
    let seed = (0..100)
        .find(|&sd| {
            let t = sample_trials(&space, 2, 4, &base, &Rng::new(sd));
            t[0].lr != t[1].lr
        })
        .unwrap();
    let res = random_search(spec, &space, 2, &base, &s.train, &s.val, &Rng::new(seed)).unwrap();
    assert_eq!(res.leaderboard.len(), 2);
    assert_eq!(res.leaderboard[0].rank, Some(1));
    assert!(matches!(
        res.leaderboard[0].outcome,
        TrialOutcome::Trained { .. }
    ));
    assert!(matches!(
        res.leaderboard[1].outcome,
        TrialOutcome::Failed { .. }
    ));
    assert_eq!(res.leaderboard[0].config.lr, 1e-3);
    assert!(res.best.is_some());
}
