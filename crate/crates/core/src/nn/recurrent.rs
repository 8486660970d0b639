//! Vanilla tanh RNN and GRU cells unrolled over a sequence, with
//! backpropagation through time.
//!
//! Sequences are slices of `width × batch` matrices, one per timestep.
//! Gradients of the shared parameters are summed over all timesteps.
//!
//! GRU recurrence (update gate `u`, reset gate `r`, candidate `c`):
//!
//! ```text
//! u_t = σ(W_u x_t + U_u h_{t-1} + b_u)
//! r_t = σ(W_r x_t + U_r h_{t-1} + b_r)
//! c_t = tanh(W_c x_t + U_c (r_t ⊙ h_{t-1}) + b_c)
//! h_t = (1 - u_t) ⊙ h_{t-1} + u_t ⊙ c_t
//! ```

use serde::{Deserialize, Serialize};

use super::{glorot_uniform, join_name, sigmoid, Module, TensorKind};
use crate::error::{Error, Result};
use crate::ndcore::{gemm_nn, gemm_nt, gemm_tn, Matrix, RngState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    Rnn,
    Gru,
}

/// `W x + U h + b`.
fn affine2(w: &Matrix, x: &Matrix, u: &Matrix, h: &Matrix, b: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(w.rows(), x.cols());
    gemm_nn(w, x, &mut out);
    gemm_nn(u, h, &mut out);
    let cols = out.cols();
    for (r, chunk) in out.data_mut().chunks_mut(cols).enumerate() {
        let bias = b.data()[r];
        chunk.iter_mut().for_each(|v| *v += bias);
    }
    out
}

fn check_sequence(op: &'static str, xs: &[Matrix], input: usize, state: usize, s0: &Matrix) -> Result<()> {
    let Some(first) = xs.first() else {
        return Err(Error::invalid(format!("{op}: empty input sequence")));
    };
    let batch = first.cols();
    for x in xs {
        if x.shape() != (input, batch) {
            return Err(Error::shape(op, (input, batch), x.shape()));
        }
    }
    if s0.shape() != (state, batch) {
        return Err(Error::shape(op, (state, batch), s0.shape()));
    }
    Ok(())
}

fn check_upstream(op: &'static str, d_states: &[Matrix], states: &[Matrix]) -> Result<()> {
    if d_states.len() != states.len() {
        return Err(Error::invalid(format!(
            "{op}: {} upstream gradients for {} timesteps",
            d_states.len(),
            states.len()
        )));
    }
    for (d, s) in d_states.iter().zip(states) {
        if d.shape() != s.shape() {
            return Err(Error::shape(op, s.shape(), d.shape()));
        }
    }
    Ok(())
}

/// Vanilla recurrent cell `s_t = tanh(U s_{t-1} + W x_t + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RnnCell {
    pub u: Matrix,
    pub w: Matrix,
    pub b: Matrix,
}

pub struct RnnCache {
    xs: Vec<Matrix>,
    /// `states[0]` is `s0`; `states[t + 1]` is the output at step `t`.
    states: Vec<Matrix>,
}

#[derive(Debug, Clone)]
pub struct RnnGrads {
    pub u: Matrix,
    pub w: Matrix,
    pub b: Matrix,
}

impl RnnGrads {
    pub fn into_vec(self) -> Vec<Matrix> {
        vec![self.u, self.w, self.b]
    }
}

impl RnnCell {
    pub fn new(input: usize, state: usize, rng: &mut RngState) -> Self {
        Self {
            u: glorot_uniform(state, state, rng),
            w: glorot_uniform(state, input, rng),
            b: Matrix::zeros(state, 1),
        }
    }

    pub fn zeros(input: usize, state: usize) -> Self {
        Self {
            u: Matrix::zeros(state, state),
            w: Matrix::zeros(state, input),
            b: Matrix::zeros(state, 1),
        }
    }

    pub fn input_width(&self) -> usize {
        self.w.cols()
    }

    pub fn state_width(&self) -> usize {
        self.u.rows()
    }

    pub fn forward(&self, xs: &[Matrix], s0: &Matrix) -> Result<(Vec<Matrix>, RnnCache)> {
        check_sequence("rnn_forward", xs, self.input_width(), self.state_width(), s0)?;
        let mut states = Vec::with_capacity(xs.len() + 1);
        states.push(s0.clone());
        for x in xs {
            let prev = states.last().expect("non-empty");
            let mut s = affine2(&self.w, x, &self.u, prev, &self.b);
            s.map_in_place(f64::tanh);
            states.push(s);
        }
        let outputs = states[1..].to_vec();
        Ok((
            outputs,
            RnnCache {
                xs: xs.to_vec(),
                states,
            },
        ))
    }

    /// Returns `(dxs, ds0, grads)` given the gradient w.r.t. every output state.
    pub fn backward(&self, cache: RnnCache, d_states: &[Matrix]) -> Result<(Vec<Matrix>, Matrix, RnnGrads)> {
        check_upstream("rnn_backward", d_states, &cache.states[1..])?;
        let k = self.state_width();
        let batch = cache.states[0].cols();
        let mut gu = Matrix::zeros(k, k);
        let mut gw = Matrix::zeros(k, self.input_width());
        let mut gb = Matrix::zeros(k, 1);
        let mut dxs = vec![Matrix::zeros(0, 0); cache.xs.len()];
        let mut carry = Matrix::zeros(k, batch);
        for t in (0..cache.xs.len()).rev() {
            let s = &cache.states[t + 1];
            let prev = &cache.states[t];
            let mut da = d_states[t].clone();
            da.add_assign(&carry)?;
            for (g, &sv) in da.data_mut().iter_mut().zip(s.data()) {
                *g *= 1.0 - sv * sv;
            }
            gemm_nt(&da, prev, &mut gu);
            gemm_nt(&da, &cache.xs[t], &mut gw);
            gb.add_assign(&da.sum_columns())?;
            let mut dx = Matrix::zeros(self.input_width(), batch);
            gemm_tn(&self.w, &da, &mut dx);
            dxs[t] = dx;
            carry = Matrix::zeros(k, batch);
            gemm_tn(&self.u, &da, &mut carry);
        }
        Ok((dxs, carry, RnnGrads { u: gu, w: gw, b: gb }))
    }
}

impl Module for RnnCell {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix, TensorKind)) {
        f(join_name(prefix, "u"), &self.u, TensorKind::Param);
        f(join_name(prefix, "w"), &self.w, TensorKind::Param);
        f(join_name(prefix, "b"), &self.b, TensorKind::Param);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix, TensorKind)) {
        f(join_name(prefix, "u"), &mut self.u, TensorKind::Param);
        f(join_name(prefix, "w"), &mut self.w, TensorKind::Param);
        f(join_name(prefix, "b"), &mut self.b, TensorKind::Param);
    }
}

/// Parameter triple for one GRU transform.
#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub u: Matrix,
    pub w: Matrix,
    pub b: Matrix,
}

impl Gate {
    fn new(input: usize, state: usize, rng: &mut RngState) -> Self {
        Self {
            u: glorot_uniform(state, state, rng),
            w: glorot_uniform(state, input, rng),
            b: Matrix::zeros(state, 1),
        }
    }

    fn zeros(input: usize, state: usize) -> Self {
        Self {
            u: Matrix::zeros(state, state),
            w: Matrix::zeros(state, input),
            b: Matrix::zeros(state, 1),
        }
    }

    fn grads_like(&self) -> Gate {
        Gate::zeros(self.w.cols(), self.u.rows())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GruCell {
    pub update: Gate,
    pub reset: Gate,
    pub candidate: Gate,
}

struct GruStep {
    u: Matrix,
    r: Matrix,
    c: Matrix,
    rh: Matrix,
}

pub struct GruCache {
    xs: Vec<Matrix>,
    /// `states[0]` is `h0`; `states[t + 1]` is the output at step `t`.
    states: Vec<Matrix>,
    steps: Vec<GruStep>,
}

#[derive(Debug, Clone)]
pub struct GruGrads {
    pub update: Gate,
    pub reset: Gate,
    pub candidate: Gate,
}

impl GruGrads {
    pub fn into_vec(self) -> Vec<Matrix> {
        let mut out = Vec::with_capacity(9);
        for g in [self.update, self.reset, self.candidate] {
            out.push(g.u);
            out.push(g.w);
            out.push(g.b);
        }
        out
    }
}

impl GruCell {
    pub fn new(input: usize, state: usize, rng: &mut RngState) -> Self {
        Self {
            update: Gate::new(input, state, rng),
            reset: Gate::new(input, state, rng),
            candidate: Gate::new(input, state, rng),
        }
    }

    pub fn zeros(input: usize, state: usize) -> Self {
        Self {
            update: Gate::zeros(input, state),
            reset: Gate::zeros(input, state),
            candidate: Gate::zeros(input, state),
        }
    }

    pub fn input_width(&self) -> usize {
        self.update.w.cols()
    }

    pub fn state_width(&self) -> usize {
        self.update.u.rows()
    }

    pub fn forward(&self, xs: &[Matrix], h0: &Matrix) -> Result<(Vec<Matrix>, GruCache)> {
        check_sequence("gru_forward", xs, self.input_width(), self.state_width(), h0)?;
        let mut states = Vec::with_capacity(xs.len() + 1);
        let mut steps = Vec::with_capacity(xs.len());
        states.push(h0.clone());
        for x in xs {
            let h = states.last().expect("non-empty");
            let mut u = affine2(&self.update.w, x, &self.update.u, h, &self.update.b);
            u.map_in_place(sigmoid);
            let mut r = affine2(&self.reset.w, x, &self.reset.u, h, &self.reset.b);
            r.map_in_place(sigmoid);
            let mut rh = r.clone();
            for (a, &hv) in rh.data_mut().iter_mut().zip(h.data()) {
                *a *= hv;
            }
            let mut c = affine2(&self.candidate.w, x, &self.candidate.u, &rh, &self.candidate.b);
            c.map_in_place(f64::tanh);
            let mut next = h.clone();
            for ((n, &uv), &cv) in next.data_mut().iter_mut().zip(u.data()).zip(c.data()) {
                *n = (1.0 - uv) * *n + uv * cv;
            }
            states.push(next);
            steps.push(GruStep { u, r, c, rh });
        }
        let outputs = states[1..].to_vec();
        Ok((
            outputs,
            GruCache {
                xs: xs.to_vec(),
                states,
                steps,
            },
        ))
    }

    /// Returns `(dxs, dh0, grads)` given the gradient w.r.t. every output state.
    pub fn backward(&self, cache: GruCache, d_states: &[Matrix]) -> Result<(Vec<Matrix>, Matrix, GruGrads)> {
        check_upstream("gru_backward", d_states, &cache.states[1..])?;
        let k = self.state_width();
        let m = self.input_width();
        let batch = cache.states[0].cols();
        let mut g = GruGrads {
            update: self.update.grads_like(),
            reset: self.reset.grads_like(),
            candidate: self.candidate.grads_like(),
        };
        let mut dxs = vec![Matrix::zeros(0, 0); cache.xs.len()];
        let mut carry = Matrix::zeros(k, batch);
        for t in (0..cache.xs.len()).rev() {
            let step = &cache.steps[t];
            let h = &cache.states[t];
            let x = &cache.xs[t];
            let mut dh = d_states[t].clone();
            dh.add_assign(&carry)?;

            let n = dh.data().len();
            let mut dac = Matrix::zeros(k, batch);
            let mut dau = Matrix::zeros(k, batch);
            let mut dh_prev = Matrix::zeros(k, batch);
            for i in 0..n {
                let g_out = dh.data()[i];
                let u = step.u.data()[i];
                let c = step.c.data()[i];
                dac.data_mut()[i] = g_out * u * (1.0 - c * c);
                dau.data_mut()[i] = g_out * (c - h.data()[i]) * u * (1.0 - u);
                dh_prev.data_mut()[i] = g_out * (1.0 - u);
            }

            gemm_nt(&dac, x, &mut g.candidate.w);
            gemm_nt(&dac, &step.rh, &mut g.candidate.u);
            g.candidate.b.add_assign(&dac.sum_columns())?;
            let mut drh = Matrix::zeros(k, batch);
            gemm_tn(&self.candidate.u, &dac, &mut drh);

            let mut dar = Matrix::zeros(k, batch);
            for i in 0..n {
                let r = step.r.data()[i];
                let d = drh.data()[i];
                dar.data_mut()[i] = d * h.data()[i] * r * (1.0 - r);
                dh_prev.data_mut()[i] += d * r;
            }

            gemm_nt(&dau, x, &mut g.update.w);
            gemm_nt(&dau, h, &mut g.update.u);
            g.update.b.add_assign(&dau.sum_columns())?;
            gemm_nt(&dar, x, &mut g.reset.w);
            gemm_nt(&dar, h, &mut g.reset.u);
            g.reset.b.add_assign(&dar.sum_columns())?;

            let mut dx = Matrix::zeros(m, batch);
            gemm_tn(&self.update.w, &dau, &mut dx);
            gemm_tn(&self.reset.w, &dar, &mut dx);
            gemm_tn(&self.candidate.w, &dac, &mut dx);
            dxs[t] = dx;

            gemm_tn(&self.update.u, &dau, &mut dh_prev);
            gemm_tn(&self.reset.u, &dar, &mut dh_prev);
            carry = dh_prev;
        }
        Ok((dxs, carry, g))
    }
}

impl Module for GruCell {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix, TensorKind)) {
        for (name, gate) in [
            ("update", &self.update),
            ("reset", &self.reset),
            ("candidate", &self.candidate),
        ] {
            let p = join_name(prefix, name);
            f(join_name(&p, "u"), &gate.u, TensorKind::Param);
            f(join_name(&p, "w"), &gate.w, TensorKind::Param);
            f(join_name(&p, "b"), &gate.b, TensorKind::Param);
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix, TensorKind)) {
        for (name, gate) in [
            ("update", &mut self.update),
            ("reset", &mut self.reset),
            ("candidate", &mut self.candidate),
        ] {
            let p = join_name(prefix, name);
            f(join_name(&p, "u"), &mut gate.u, TensorKind::Param);
            f(join_name(&p, "w"), &mut gate.w, TensorKind::Param);
            f(join_name(&p, "b"), &mut gate.b, TensorKind::Param);
        }
    }
}

/// A recurrent layer of either cell type.
#[derive(Debug, Clone, PartialEq)]
pub enum Recurrent {
    Rnn(RnnCell),
    Gru(GruCell),
}

pub enum RecurrentCache {
    Rnn(RnnCache),
    Gru(GruCache),
}

impl Recurrent {
    pub fn new(kind: CellKind, input: usize, state: usize, rng: &mut RngState) -> Self {
        match kind {
            CellKind::Rnn => Recurrent::Rnn(RnnCell::new(input, state, rng)),
            CellKind::Gru => Recurrent::Gru(GruCell::new(input, state, rng)),
        }
    }

    pub fn kind(&self) -> CellKind {
        match self {
            Recurrent::Rnn(_) => CellKind::Rnn,
            Recurrent::Gru(_) => CellKind::Gru,
        }
    }

    pub fn input_width(&self) -> usize {
        match self {
            Recurrent::Rnn(c) => c.input_width(),
            Recurrent::Gru(c) => c.input_width(),
        }
    }

    pub fn state_width(&self) -> usize {
        match self {
            Recurrent::Rnn(c) => c.state_width(),
            Recurrent::Gru(c) => c.state_width(),
        }
    }

    /// Runs the cell from a zero initial state.
    pub fn forward(&self, xs: &[Matrix]) -> Result<(Vec<Matrix>, RecurrentCache)> {
        let batch = xs.first().map_or(0, Matrix::cols);
        let s0 = Matrix::zeros(self.state_width(), batch);
        match self {
            Recurrent::Rnn(c) => {
                let (out, cache) = c.forward(xs, &s0)?;
                Ok((out, RecurrentCache::Rnn(cache)))
            }
            Recurrent::Gru(c) => {
                let (out, cache) = c.forward(xs, &s0)?;
                Ok((out, RecurrentCache::Gru(cache)))
            }
        }
    }

    /// Returns `(dxs, grads)`; the zero initial state receives no gradient.
    pub fn backward(&self, cache: RecurrentCache, d_states: &[Matrix]) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
        match (self, cache) {
            (Recurrent::Rnn(c), RecurrentCache::Rnn(cache)) => {
                let (dxs, _, g) = c.backward(cache, d_states)?;
                Ok((dxs, g.into_vec()))
            }
            (Recurrent::Gru(c), RecurrentCache::Gru(cache)) => {
                let (dxs, _, g) = c.backward(cache, d_states)?;
                Ok((dxs, g.into_vec()))
            }
            _ => Err(Error::invalid("recurrent cache does not match cell type")),
        }
    }
}

impl Module for Recurrent {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix, TensorKind)) {
        match self {
            Recurrent::Rnn(c) => c.visit(prefix, f),
            Recurrent::Gru(c) => c.visit(prefix, f),
        }
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix, TensorKind)) {
        match self {
            Recurrent::Rnn(c) => c.visit_mut(prefix, f),
            Recurrent::Gru(c) => c.visit_mut(prefix, f),
        }
    }
}
