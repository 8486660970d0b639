//! RUL regressors: gradients, memorization, reductions and ensembles.

mod common;

use common::{max_relative_error, numeric_gradient, FD_REL_TOL};
use vaessl::data::{preprocess, synthetic, DataConfig, ProcessedDataset, WindowSet};
use vaessl::metrics::mse;
use vaessl::ndcore::{Matrix, RngState};
use vaessl::nn::{Mode, Module};
use vaessl::optim::TrainConfig;
use vaessl::reliability::{
    ensemble_predict, predict_rul, self_learning, train_on_embedding, train_supervised, Ensemble, IdentityEmbedding,
    RulConfig, RulModel,
};

fn dataset(engines: usize, seed: u64, window: usize) -> ProcessedDataset {
    let raw = synthetic::generate(&synthetic::SyntheticConfig {
        train_engines: engines,
        test_engines: 6,
        min_life: 50,
        max_life: 90,
        seed,
        ..Default::default()
    });
    preprocess(
        &raw,
        &DataConfig {
            window,
            ..DataConfig::default()
        },
    )
    .unwrap()
}

fn config(widths: &[usize], epochs: usize, seed: u64) -> RulConfig {
    RulConfig {
        widths: widths.to_vec(),
        train: TrainConfig {
            batch_size: 32,
            max_epochs: epochs,
            lr: 5e-3,
            seed,
            ..TrainConfig::default()
        },
        ..RulConfig::default()
    }
}

#[test]
fn loss_gradients() {
    for seed in 1..=5u64 {
        for bn in [false, true] {
            let mut rng = RngState::new(seed);
            let cfg = RulConfig {
                widths: vec![4, 3],
                batch_norm: bn,
                ..RulConfig::default()
            };
            let model = RulModel::new(3, &cfg, &mut rng);
            let xs: Vec<Matrix> = (0..4).map(|_| rng.randn(3, 5)).collect();
            let y = Matrix::from_fn(1, 5, |_, _| rng.uniform_range(0.0, 140.0));
            let (_, analytic) = model.clone().loss_grad(&xs, &y, Mode::Train).unwrap();
            let n = model.params().len();
            let numeric = numeric_gradient(
                &model,
                n,
                |m, i| m.params_mut().into_iter().nth(i).unwrap(),
                |m| m.clone().loss_grad(&xs, &y, Mode::Train).unwrap().0,
            );
            let err = max_relative_error(&analytic, &numeric);
            assert!(err < FD_REL_TOL, "seed {seed} bn {bn}: {err:e}");
        }
    }
}

#[test]
fn memorizes_a_single_engine() {
    let ds = dataset(1, 21, 5);
    let set = ds.train_windows(|_| true, true);
    let labels = set.labels().unwrap().to_vec();
    assert!(labels.iter().all(|&l| l < 140.0));
    let mut cfg = config(&[32, 16], 3000, 1);
    cfg.train.batch_size = 16;
    cfg.train.lr = 1e-2;
    cfg.train.patience = 300;
    let out = train_supervised(&set, &cfg).unwrap();
    let pred = predict_rul(&out.model, &set).unwrap();
    let err = mse(&pred, &labels).unwrap();
    assert!(err < 1.0, "training mse {err} cycles²");
}

#[test]
fn identity_embedding_reduces_to_supervised() {
    let ds = dataset(10, 22, 6);
    let set = ds.train_windows(|_| true, true);
    let cfg = config(&[6, 4], 3, 7);
    let a = train_supervised(&set, &cfg).unwrap();
    let b = train_on_embedding(&IdentityEmbedding { width: set.width }, &set, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.history, b.history);
}

#[test]
fn self_learning_without_unlabeled_data_is_supervised() {
    let ds = dataset(10, 23, 6);
    let set = ds.train_windows(|_| true, true);
    let cfg = config(&[6, 4], 3, 8);
    let a = train_supervised(&set, &cfg).unwrap();
    let empty = WindowSet::empty(set.steps, set.width, false);
    let b = self_learning(&set, &empty, &cfg).unwrap();
    assert_eq!(a.model, b.model.model);
    assert!(b.pseudo_labels.is_empty());
}

#[test]
fn pseudo_labels_stay_in_range() {
    let ds = dataset(10, 24, 6);
    let labeled = ds.train_windows(|i| i < 3, true);
    let unlabeled = ds.train_windows(|i| i >= 3, false);
    let cfg = config(&[6, 4], 3, 9);
    let out = self_learning(&labeled, &unlabeled, &cfg).unwrap();
    assert_eq!(out.pseudo_labels.len(), unlabeled.len());
    assert!(out.pseudo_labels.iter().all(|&p| (0.0..=140.0).contains(&p)));
    assert_ne!(out.base.model, out.model.model);
}

#[test]
fn supervised_training_is_seeded() {
    let ds = dataset(8, 25, 6);
    let set = ds.train_windows(|_| true, true);
    let cfg = config(&[6, 4], 3, 10);
    let a = train_supervised(&set, &cfg).unwrap();
    let b = train_supervised(&set, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    let c = train_supervised(&set, &cfg.with_seed(11)).unwrap();
    assert_ne!(a.model, c.model);
}

#[test]
fn ensemble_is_order_free_and_no_worse_than_its_worst_member() {
    let ds = dataset(12, 26, 6);
    let set = ds.train_windows(|_| true, true);
    let test = ds.test_windows();
    let truth = test.labels().unwrap().to_vec();
    for trial in 0..5u64 {
        let cfg = config(&[6, 4], 4, 100 * trial);
        let e = Ensemble::train(5, &cfg, |c| Ok(train_supervised(&set, c)?.model)).unwrap();
        let pred = ensemble_predict(&e, &test).unwrap();
        assert!(pred.iter().all(|&p| (0.0..=140.0).contains(&p)));
        let mut reversed = e.clone();
        reversed.members.reverse();
        for (a, b) in pred.iter().zip(ensemble_predict(&reversed, &test).unwrap()) {
            assert!((a - b).abs() < 1e-9);
        }
        let worst = e
            .members
            .iter()
            .map(|m| mse(&predict_rul(m, &test).unwrap(), &truth).unwrap())
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(mse(&pred, &truth).unwrap() <= worst + 1e-9);
    }
}
