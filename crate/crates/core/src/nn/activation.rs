use crate::error::{Error, Result};
use crate::ndcore::Matrix;

pub struct ReluCache {
    active: Vec<bool>,
    shape: (usize, usize),
}

/// Elementwise `max(0, x)`.
pub fn relu(x: &Matrix) -> (Matrix, ReluCache) {
    let active: Vec<bool> = x.data().iter().map(|&v| v > 0.0).collect();
    let y = x.map(|v| if v > 0.0 { v } else { 0.0 });
    (
        y,
        ReluCache {
            active,
            shape: x.shape(),
        },
    )
}

/// Gradient of [`relu`]; the subgradient at exactly zero is zero.
pub fn relu_backward(cache: ReluCache, dy: &Matrix) -> Result<Matrix> {
    if dy.shape() != cache.shape {
        return Err(Error::shape("relu_backward", cache.shape, dy.shape()));
    }
    let data = dy
        .data()
        .iter()
        .zip(&cache.active)
        .map(|(&g, &on)| if on { g } else { 0.0 })
        .collect();
    Matrix::new(cache.shape.0, cache.shape.1, data)
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}
