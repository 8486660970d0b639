//! Naive-loop metric oracles.

use vaessl::metrics::{mae, mse, r2, score};
use vaessl::ndcore::RngState;

pub fn pairs(seed: u64, n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut rng = RngState::new(seed);
    let truth: Vec<f64> = (0..n).map(|_| rng.uniform_range(0.0, 200.0)).collect();
    let pred: Vec<f64> = truth.iter().map(|t| t + 30.0 * rng.normal()).collect();
    (pred, truth)
}

/// Largest deviation of score from e - 1 at one late and one early point.
pub fn closed_form_score_error() -> f64 {
    let target = std::f64::consts::E - 1.0;
    let late = (score(&[110.0], &[100.0]).unwrap() - target).abs();
    let early = (score(&[87.0], &[100.0]).unwrap() - target).abs();
    late.max(early)
}

/// Absolute deviations of mae, mse, r2 and the relative deviation of score
/// from loops written out by hand, on `n` random pairs.
pub fn naive_loop_errors(seed: u64, n: usize) -> [f64; 4] {
    let (pred, truth) = pairs(seed, n);
    let nf = n as f64;
    let mut abs = 0.0;
    let mut sq = 0.0;
    let mut mean = 0.0;
    for i in 0..n {
        abs += (pred[i] - truth[i]).abs();
        sq += (pred[i] - truth[i]) * (pred[i] - truth[i]);
        mean += truth[i];
    }
    mean /= nf;
    let mut tot = 0.0;
    for t in &truth {
        tot += (t - mean) * (t - mean);
    }
    let mut s = 0.0;
    for i in 0..n {
        let d = pred[i] - truth[i];
        s += if d < 0.0 {
            (-d / 13.0).exp() - 1.0
        } else {
            (d / 10.0).exp() - 1.0
        };
    }
    [
        (mae(&pred, &truth).unwrap() - abs / nf).abs(),
        (mse(&pred, &truth).unwrap() - sq / nf).abs(),
        (r2(&pred, &truth).unwrap() - (1.0 - sq / tot)).abs(),
        ((score(&pred, &truth).unwrap() - s) / s).abs(),
    ]
}
