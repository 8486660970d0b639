use super::{glorot_uniform, join_name, Module, TensorKind};
use crate::error::{Error, Result};
use crate::ndcore::{gemm_nn, gemm_nt, gemm_tn, Matrix, RngState};

/// Affine map `W x + b`, with `b` broadcast over batch columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub w: Matrix,
    pub b: Matrix,
}

pub struct DenseCache {
    x: Matrix,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub w: Matrix,
    pub b: Matrix,
}

impl DenseGrads {
    pub fn into_vec(self) -> Vec<Matrix> {
        vec![self.w, self.b]
    }
}

impl Dense {
    pub fn new(input: usize, output: usize, rng: &mut RngState) -> Self {
        Self {
            w: glorot_uniform(output, input, rng),
            b: Matrix::zeros(output, 1),
        }
    }

    pub fn zeros(input: usize, output: usize) -> Self {
        Self {
            w: Matrix::zeros(output, input),
            b: Matrix::zeros(output, 1),
        }
    }

    pub fn input_width(&self) -> usize {
        self.w.cols()
    }

    pub fn output_width(&self) -> usize {
        self.w.rows()
    }

    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() != self.input_width() {
            return Err(Error::shape("dense_forward", self.w.shape(), x.shape()));
        }
        let mut y = Matrix::zeros(self.output_width(), x.cols());
        gemm_nn(&self.w, x, &mut y);
        let cols = y.cols();
        for (r, chunk) in y.data_mut().chunks_mut(cols).enumerate() {
            let b = self.b.data()[r];
            chunk.iter_mut().for_each(|v| *v += b);
        }
        Ok(y)
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, DenseCache)> {
        let y = self.infer(x)?;
        Ok((y, DenseCache { x: x.clone() }))
    }

    /// Returns `(dx, grads)` for upstream gradient `dy`.
    pub fn backward(&self, cache: DenseCache, dy: &Matrix) -> Result<(Matrix, DenseGrads)> {
        if dy.shape() != (self.output_width(), cache.x.cols()) {
            return Err(Error::shape(
                "dense_backward",
                (self.output_width(), cache.x.cols()),
                dy.shape(),
            ));
        }
        let mut dw = Matrix::zeros(self.w.rows(), self.w.cols());
        gemm_nt(dy, &cache.x, &mut dw);
        let db = dy.sum_columns();
        let mut dx = Matrix::zeros(self.input_width(), dy.cols());
        gemm_tn(&self.w, dy, &mut dx);
        Ok((dx, DenseGrads { w: dw, b: db }))
    }
}

impl Module for Dense {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix, TensorKind)) {
        f(join_name(prefix, "w"), &self.w, TensorKind::Param);
        f(join_name(prefix, "b"), &self.b, TensorKind::Param);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix, TensorKind)) {
        f(join_name(prefix, "w"), &mut self.w, TensorKind::Param);
        f(join_name(prefix, "b"), &mut self.b, TensorKind::Param);
    }
}
