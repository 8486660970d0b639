//! Dense matrices and seeded random streams.

mod matrix;
mod rng;

pub(crate) use matrix::{gemm_nn, gemm_nt, gemm_tn, read_u64};
pub use matrix::{EwOp, Matrix};
pub use rng::{derive_seed, RngState};

/// Free-function form of [`Matrix::matmul`].
pub fn matmul(a: &Matrix, b: &Matrix) -> crate::Result<Matrix> {
    a.matmul(b)
}

/// Free-function form of [`Matrix::ew`].
pub fn ew(a: &Matrix, b: &Matrix, op: EwOp) -> crate::Result<Matrix> {
    a.ew(b, op)
}

/// Free-function form of [`RngState::randn`].
pub fn randn(rng: &mut RngState, rows: usize, cols: usize) -> Matrix {
    rng.randn(rows, cols)
}
