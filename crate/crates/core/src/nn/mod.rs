//! Differentiable layers with explicit forward caches and reverse-mode
//! backward passes.
//!
//! Every layer exposes `forward`, returning its output together with a cache
//! value, and `backward`, which consumes that cache by value. Gradients are
//! returned in the same order the layer's parameters are visited by
//! [`Module::visit`].

mod activation;
mod batchnorm;
pub mod checkpoint;
mod dense;
mod recurrent;
mod stack;

pub use activation::{relu, relu_backward, sigmoid, ReluCache};
pub use batchnorm::{BatchNorm, BatchNormCache, BatchNormGrads};
pub use dense::{Dense, DenseCache, DenseGrads};
pub use recurrent::{CellKind, GruCache, GruCell, GruGrads, Recurrent, RecurrentCache, RnnCache, RnnCell, RnnGrads};
pub use stack::{RecurrentStack, StackCache};

use crate::ndcore::{Matrix, RngState};

/// Whether batch normalization uses batch statistics (and updates its
/// running estimates) or the stored running estimates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// Trainable parameter or persistent buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TensorKind {
    Param,
    Buffer,
}

/// Anything that owns named tensors.
pub trait Module {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix, TensorKind));
    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix, TensorKind));

    /// Trainable parameters in visit order.
    fn params(&self) -> Vec<&Matrix> {
        let mut out = Vec::new();
        self.visit("", &mut |_, m, kind| {
            if kind == TensorKind::Param {
                out.push(m);
            }
        });
        out
    }

    fn params_mut(&mut self) -> Vec<&mut Matrix> {
        let mut out = Vec::new();
        self.visit_mut("", &mut |_, m, kind| {
            if kind == TensorKind::Param {
                out.push(m);
            }
        });
        out
    }

    /// All named tensors (parameters and buffers), for checkpoints.
    fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        self.visit("", &mut |name, m, _| out.push((name, m)));
        out
    }

    fn param_count(&self) -> usize {
        self.params().iter().map(|m| m.data().len()).sum()
    }
}

pub(crate) fn join_name(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

/// Uniform draw in `±sqrt(6 / (fan_in + fan_out))`, shaped `fan_out × fan_in`.
pub fn glorot_uniform(fan_out: usize, fan_in: usize, rng: &mut RngState) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Matrix::from_fn(fan_out, fan_in, |_, _| rng.uniform_range(-limit, limit))
}
