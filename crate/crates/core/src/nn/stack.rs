use super::{join_name, BatchNorm, BatchNormCache, CellKind, Mode, Module, Recurrent, RecurrentCache, TensorKind};
use crate::error::{Error, Result};
use crate::ndcore::{Matrix, RngState};

/// Stacked recurrent layers, each optionally followed by batch
/// normalization over the (batch × time) columns of its output sequence.
#[derive(Debug, Clone, PartialEq)]
pub struct RecurrentStack {
    pub layers: Vec<Recurrent>,
    pub norms: Vec<Option<BatchNorm>>,
}

pub struct StackCache {
    entries: Vec<(RecurrentCache, Option<BatchNormCache>)>,
}

impl RecurrentStack {
    /// `widths[0]` is the input width; each following entry adds a layer.
    /// `normalize[i]` places batch normalization after layer `i`.
    pub fn new(kind: CellKind, widths: &[usize], normalize: &[bool], rng: &mut RngState) -> Self {
        assert!(widths.len() >= 2, "a stack needs at least one layer");
        assert_eq!(normalize.len(), widths.len() - 1);
        let layers = widths
            .windows(2)
            .map(|w| Recurrent::new(kind, w[0], w[1], rng))
            .collect();
        let norms = widths[1..]
            .iter()
            .zip(normalize)
            .map(|(&w, &on)| on.then(|| BatchNorm::new(w)))
            .collect();
        Self { layers, norms }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().expect("non-empty stack").state_width()
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.input_width()];
        w.extend(self.layers.iter().map(Recurrent::state_width));
        w
    }

    pub fn forward(&mut self, xs: &[Matrix], mode: Mode) -> Result<(Vec<Matrix>, StackCache)> {
        let mut current = xs.to_vec();
        let mut entries = Vec::with_capacity(self.layers.len());
        for (layer, norm) in self.layers.iter().zip(self.norms.iter_mut()) {
            let (out, rc) = layer.forward(&current)?;
            let (out, nc) = match norm {
                Some(bn) => {
                    let (y, c) = bn.forward_sequence(&out, mode)?;
                    (y, Some(c))
                }
                None => (out, None),
            };
            entries.push((rc, nc));
            current = out;
        }
        Ok((current, StackCache { entries }))
    }

    /// Eval-mode outputs of the first `depth` layers (after their
    /// normalization), without caches.
    pub fn infer_prefix(&self, xs: &[Matrix], depth: usize) -> Result<Vec<Matrix>> {
        if depth > self.layers.len() {
            return Err(Error::invalid(format!(
                "requested {depth} layers from a stack of {}",
                self.layers.len()
            )));
        }
        let mut current = xs.to_vec();
        for (layer, norm) in self.layers.iter().zip(&self.norms).take(depth) {
            let (out, _) = layer.forward(&current)?;
            current = match norm {
                Some(bn) => bn.infer_sequence(&out)?,
                None => out,
            };
        }
        Ok(current)
    }

    pub fn infer(&self, xs: &[Matrix]) -> Result<Vec<Matrix>> {
        self.infer_prefix(xs, self.layers.len())
    }

    /// Returns `(dxs, grads)` with grads in visit order.
    pub fn backward(&self, cache: StackCache, d_out: &[Matrix]) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
        let mut per_layer: Vec<Vec<Matrix>> = Vec::with_capacity(self.layers.len());
        let mut grad = d_out.to_vec();
        for ((layer, norm), (rc, nc)) in self.layers.iter().zip(&self.norms).zip(cache.entries).rev() {
            let mut bn_grads = Vec::new();
            if let (Some(bn), Some(nc)) = (norm, nc) {
                let (dx, g) = bn.backward_sequence(nc, &grad)?;
                grad = dx;
                bn_grads = g.into_vec();
            }
            let (dx, mut g) = layer.backward(rc, &grad)?;
            grad = dx;
            g.extend(bn_grads);
            per_layer.push(g);
        }
        per_layer.reverse();
        Ok((grad, per_layer.into_iter().flatten().collect()))
    }
}

impl Module for RecurrentStack {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix, TensorKind)) {
        for (i, (layer, norm)) in self.layers.iter().zip(&self.norms).enumerate() {
            layer.visit(&join_name(prefix, &format!("rec{i}")), f);
            if let Some(bn) = norm {
                bn.visit(&join_name(prefix, &format!("bn{i}")), f);
            }
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix, TensorKind)) {
        for (i, (layer, norm)) in self.layers.iter_mut().zip(self.norms.iter_mut()).enumerate() {
            layer.visit_mut(&join_name(prefix, &format!("rec{i}")), f);
            if let Some(bn) = norm {
                bn.visit_mut(&join_name(prefix, &format!("bn{i}")), f);
            }
        }
    }
}
