//! Variational autoencoder: loss gradients, KL oracle and training behavior.

mod common;

use vaessl::data::{preprocess, synthetic, DataConfig, WindowSet};
use vaessl::ndcore::{Matrix, RngState};
use vaessl::nn::Mode;
use vaessl::optim::TrainConfig;
use vaessl::vae::{
    evaluate, kl_divergence, train_vae, validation_seed, validation_windows, Noise, VaeConfig, VaeModel,
};

fn seq(rng: &mut RngState, t: usize, w: usize, b: usize) -> Vec<Matrix> {
    (0..t).map(|_| rng.randn(w, b)).collect()
}

#[test]
fn kl_matches_monte_carlo() {
    let mut rng = RngState::new(11);
    let d = 3;
    let mu = rng.randn(d, 1);
    let lv = rng.randn(d, 1).scale(0.7);
    let closed = kl_divergence(&mu, &lv).unwrap();

    // E_q[log q(z) − log p(z)], diagonal Gaussians, constants cancel
    let n = 1_000_000;
    let mut acc = 0.0;
    for _ in 0..n {
        let mut s = 0.0;
        for j in 0..d {
            let m = mu.get(j, 0);
            let l = lv.get(j, 0);
            let e = rng.normal();
            let z = m + (0.5 * l).exp() * e;
            s += -0.5 * l - 0.5 * e * e + 0.5 * z * z;
        }
        acc += s;
    }
    let mc = acc / n as f64;
    assert!(closed > 0.0);
    assert!(((mc - closed) / closed).abs() < 0.01, "closed {closed}, mc {mc}");
}

#[test]
fn kl_is_non_negative() {
    let mut rng = RngState::new(12);
    for _ in 0..200 {
        let mu = rng.randn(4, 3).scale(rng.uniform() * 3.0);
        let lv = rng.randn(4, 3).scale(rng.uniform() * 4.0);
        assert!(kl_divergence(&mu, &lv).unwrap() >= -1e-12);
    }
}

#[test]
fn encode_is_bit_deterministic() {
    let mut rng = RngState::new(13);
    let model = VaeModel::new(5, &VaeConfig::default(), &mut rng);
    let xs = seq(&mut rng, 4, 5, 3);
    let a = model.clone().encode(&xs, Mode::Eval).unwrap();
    let b = model.clone().encode(&xs, Mode::Eval).unwrap();
    assert_eq!((a.0, a.1), (b.0, b.1));
}

fn small_config(seed: u64, epochs: usize) -> VaeConfig {
    VaeConfig {
        train: TrainConfig {
            batch_size: 32,
            max_epochs: epochs,
            lr: 5e-3,
            seed,
            ..TrainConfig::default()
        },
        ..VaeConfig::default()
    }
}

fn white_noise(engines: u32, per_engine: usize, t: usize, w: usize, seed: u64) -> WindowSet {
    let mut rng = RngState::new(seed);
    let mut set = WindowSet::empty(t, w, false);
    for id in 1..=engines {
        for _ in 0..per_engine {
            let rows: Vec<Vec<f64>> = (0..t).map(|_| (0..w).map(|_| rng.uniform()).collect()).collect();
            set.push(id, rows, None);
        }
    }
    set
}

#[test]
fn white_noise_reconstruction_stays_near_its_variance() {
    let set = white_noise(20, 20, 8, 6, 14);
    let cfg = small_config(3, 15);
    let out = train_vae(&set, &cfg).unwrap();
    let val = validation_windows(&set, &cfg).unwrap();
    let terms = evaluate(&out.model, &val, validation_seed(&cfg)).unwrap();
    let variance = 1.0 / 12.0;
    assert!(
        terms.recon > 0.75 * variance,
        "recon {} fell well below the noise variance {variance}",
        terms.recon
    );
}

#[test]
fn structured_data_reconstructs_below_its_variance() {
    let raw = synthetic::generate(&synthetic::SyntheticConfig {
        train_engines: 20,
        test_engines: 2,
        min_life: 60,
        max_life: 120,
        seed: 15,
        ..Default::default()
    });
    let ds = preprocess(
        &raw,
        &DataConfig {
            window: 10,
            stride: 2,
            ..DataConfig::default()
        },
    )
    .unwrap();
    let set = ds.train_windows(|_| true, false);
    let cfg = small_config(4, 20);
    let out = train_vae(&set, &cfg).unwrap();

    let idx: Vec<usize> = (0..set.len()).collect();
    let xs = set.batch(&idx);
    let flat = Matrix::hcat(&xs).unwrap();
    let mut variance = 0.0;
    for r in 0..flat.rows() {
        let row = flat.row(r);
        let mean = row.iter().sum::<f64>() / row.len() as f64;
        variance += row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / row.len() as f64;
    }
    variance /= flat.rows() as f64;
    let terms = out.model.clone().elbo(&xs, Noise::Zero, 1.0, Mode::Eval).unwrap();
    assert!(
        terms.recon < variance,
        "recon {} not below data variance {variance}",
        terms.recon
    );
}

#[test]
fn training_is_seeded() {
    let set = white_noise(10, 5, 4, 3, 16);
    let cfg = small_config(5, 3);
    let a = train_vae(&set, &cfg).unwrap();
    let b = train_vae(&set, &cfg).unwrap();
    assert_eq!(a.model, b.model);
    assert_eq!(a.history, b.history);
}
