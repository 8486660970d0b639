#![allow(dead_code)]

pub mod gradchecks;
pub mod oracles;
pub mod tiny;

use vaessl::ndcore::Matrix;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;

/// Central finite-difference gradient of `loss` w.r.t. every entry of the
/// tensors in `params`, which `loss` reads through `set`.
pub fn numeric_gradient<P: Clone>(
    base: &P,
    n_tensors: usize,
    tensor: impl Fn(&mut P, usize) -> &mut Matrix,
    loss: impl Fn(&P) -> f64,
) -> Vec<Matrix> {
    let mut out = Vec::with_capacity(n_tensors);
    for t in 0..n_tensors {
        let mut probe = base.clone();
        let shape = tensor(&mut probe, t).shape();
        let mut g = Matrix::zeros(shape.0, shape.1);
        for i in 0..shape.0 * shape.1 {
            let mut plus = base.clone();
            tensor(&mut plus, t).data_mut()[i] += FD_STEP;
            let mut minus = base.clone();
            tensor(&mut minus, t).data_mut()[i] -= FD_STEP;
            g.data_mut()[i] = (loss(&plus) - loss(&minus)) / (2.0 * FD_STEP);
        }
        out.push(g);
    }
    out
}

/// Largest entrywise relative error, with a floor on the denominator so
/// entries that are both ~0 compare by absolute difference.
pub fn max_relative_error(analytic: &[Matrix], numeric: &[Matrix]) -> f64 {
    assert_eq!(analytic.len(), numeric.len(), "gradient list lengths differ");
    let mut worst: f64 = 0.0;
    for (a, n) in analytic.iter().zip(numeric) {
        assert_eq!(a.shape(), n.shape(), "gradient shapes differ");
        for (x, y) in a.data().iter().zip(n.data()) {
            let denom = x.abs().max(y.abs()).max(1e-6);
            worst = worst.max((x - y).abs() / denom);
        }
    }
    worst
}

/// `Σ_t Σ_ij out_t[ij] · proj_t[ij]`, a scalar probe of a sequence output.
pub fn project(outputs: &[Matrix], proj: &[Matrix]) -> f64 {
    outputs
        .iter()
        .zip(proj)
        .map(|(o, p)| o.data().iter().zip(p.data()).map(|(a, b)| a * b).sum::<f64>())
        .sum()
}
