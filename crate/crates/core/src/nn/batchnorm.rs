use super::{join_name, Mode, Module, TensorKind};
use crate::error::{Error, Result};
use crate::ndcore::Matrix;

/// Feature-wise batch normalization over the columns of an `n × B` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm {
    pub gain: Matrix,
    pub shift: Matrix,
    pub running_mean: Matrix,
    pub running_var: Matrix,
    pub eps: f64,
    /// Weight on the previous running estimate.
    pub momentum: f64,
}

pub struct BatchNormCache {
    mode: Mode,
    normalized: Matrix,
    inv_std: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct BatchNormGrads {
    pub gain: Matrix,
    pub shift: Matrix,
}

impl BatchNormGrads {
    pub fn into_vec(self) -> Vec<Matrix> {
        vec![self.gain, self.shift]
    }
}

impl BatchNorm {
    pub const DEFAULT_MOMENTUM: f64 = 0.9;
    pub const DEFAULT_EPS: f64 = 1e-5;

    pub fn new(width: usize) -> Self {
        Self {
            gain: Matrix::filled(width, 1, 1.0),
            shift: Matrix::zeros(width, 1),
            running_mean: Matrix::zeros(width, 1),
            running_var: Matrix::filled(width, 1, 1.0),
            eps: Self::DEFAULT_EPS,
            momentum: Self::DEFAULT_MOMENTUM,
        }
    }

    pub fn width(&self) -> usize {
        self.gain.rows()
    }

    /// Train mode normalizes with batch statistics and folds them into the
    /// running estimates; eval mode uses the running estimates.
    pub fn forward(&mut self, x: &Matrix, mode: Mode) -> Result<(Matrix, BatchNormCache)> {
        let n = self.width();
        if x.rows() != n {
            return Err(Error::shape("batchnorm_forward", (n, x.cols()), x.shape()));
        }
        let batch = x.cols();
        let mut normalized = Matrix::zeros(n, batch);
        let mut inv_std = vec![0.0; n];
        match mode {
            Mode::Train => {
                if batch < 2 {
                    return Err(Error::invalid(
                        "batch normalization in train mode needs at least 2 samples",
                    ));
                }
                for r in 0..n {
                    let row = x.row(r);
                    let mean = row.iter().sum::<f64>() / batch as f64;
                    let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / batch as f64;
                    let is = 1.0 / (var + self.eps).sqrt();
                    inv_std[r] = is;
                    for (c, v) in row.iter().enumerate() {
                        normalized.set(r, c, (v - mean) * is);
                    }
                    let unbiased = var * batch as f64 / (batch - 1) as f64;
                    let m = self.momentum;
                    let rm = &mut self.running_mean.data_mut()[r];
                    *rm = m * *rm + (1.0 - m) * mean;
                    let rv = &mut self.running_var.data_mut()[r];
                    *rv = m * *rv + (1.0 - m) * unbiased;
                }
            }
            Mode::Eval => {
                for r in 0..n {
                    let mean = self.running_mean.data()[r];
                    let is = 1.0 / (self.running_var.data()[r] + self.eps).sqrt();
                    inv_std[r] = is;
                    for (c, v) in x.row(r).iter().enumerate() {
                        normalized.set(r, c, (v - mean) * is);
                    }
                }
            }
        }
        let y = self.scale_shift(&normalized);
        Ok((
            y,
            BatchNormCache {
                mode,
                normalized,
                inv_std,
            },
        ))
    }

    /// Eval-mode forward that leaves running statistics untouched.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        let mut scratch = self.clone();
        Ok(scratch.forward(x, Mode::Eval)?.0)
    }

    fn scale_shift(&self, normalized: &Matrix) -> Matrix {
        let mut y = normalized.clone();
        let cols = y.cols();
        for (r, chunk) in y.data_mut().chunks_mut(cols).enumerate() {
            let g = self.gain.data()[r];
            let s = self.shift.data()[r];
            chunk.iter_mut().for_each(|v| *v = g * *v + s);
        }
        y
    }

    pub fn backward(&self, cache: BatchNormCache, dy: &Matrix) -> Result<(Matrix, BatchNormGrads)> {
        let (n, batch) = cache.normalized.shape();
        if dy.shape() != (n, batch) {
            return Err(Error::shape("batchnorm_backward", (n, batch), dy.shape()));
        }
        let mut dgain = Matrix::zeros(n, 1);
        let mut dshift = Matrix::zeros(n, 1);
        let mut dx = Matrix::zeros(n, batch);
        let bf = batch as f64;
        for r in 0..n {
            let g = self.gain.data()[r];
            let dyr = dy.row(r);
            let xh = cache.normalized.row(r);
            let sum_dy: f64 = dyr.iter().sum();
            let sum_dy_xh: f64 = dyr.iter().zip(xh).map(|(a, b)| a * b).sum();
            dgain.data_mut()[r] = sum_dy_xh;
            dshift.data_mut()[r] = sum_dy;
            let is = cache.inv_std[r];
            for c in 0..batch {
                let v = match cache.mode {
                    Mode::Train => g * is / bf * (bf * dyr[c] - sum_dy - xh[c] * sum_dy_xh),
                    Mode::Eval => g * is * dyr[c],
                };
                dx.set(r, c, v);
            }
        }
        Ok((
            dx,
            BatchNormGrads {
                gain: dgain,
                shift: dshift,
            },
        ))
    }

    /// Normalizes a sequence jointly over its (batch × time) columns.
    pub fn forward_sequence(&mut self, xs: &[Matrix], mode: Mode) -> Result<(Vec<Matrix>, BatchNormCache)> {
        let batch = xs.first().map_or(0, Matrix::cols);
        let joined = Matrix::hcat(xs)?;
        let (y, cache) = self.forward(&joined, mode)?;
        Ok((y.split_columns(batch)?, cache))
    }

    pub fn infer_sequence(&self, xs: &[Matrix]) -> Result<Vec<Matrix>> {
        let batch = xs.first().map_or(0, Matrix::cols);
        self.infer(&Matrix::hcat(xs)?)?.split_columns(batch)
    }

    pub fn backward_sequence(&self, cache: BatchNormCache, dys: &[Matrix]) -> Result<(Vec<Matrix>, BatchNormGrads)> {
        let batch = dys.first().map_or(0, Matrix::cols);
        let (dx, g) = self.backward(cache, &Matrix::hcat(dys)?)?;
        Ok((dx.split_columns(batch)?, g))
    }
}

impl Module for BatchNorm {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix, TensorKind)) {
        f(join_name(prefix, "gain"), &self.gain, TensorKind::Param);
        f(join_name(prefix, "shift"), &self.shift, TensorKind::Param);
        f(
            join_name(prefix, "running_mean"),
            &self.running_mean,
            TensorKind::Buffer,
        );
        f(join_name(prefix, "running_var"), &self.running_var, TensorKind::Buffer);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix, TensorKind)) {
        f(join_name(prefix, "gain"), &mut self.gain, TensorKind::Param);
        f(join_name(prefix, "shift"), &mut self.shift, TensorKind::Param);
        f(
            join_name(prefix, "running_mean"),
            &mut self.running_mean,
            TensorKind::Buffer,
        );
        f(
            join_name(prefix, "running_var"),
            &mut self.running_var,
            TensorKind::Buffer,
        );
    }
}
