//! Recurrent variational autoencoder.
//!
//! The encoder is a batch-normalized GRU stack followed by two per-timestep
//! dense heads for the posterior mean and log-variance. The decoder runs a
//! GRU stack over the sampled latent sequence and maps each step back to
//! sensor space with a dense layer. Columns of every matrix are windows of a
//! batch; a sequence is one matrix per timestep.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{holdout_engines, WindowSet};
use crate::error::{Error, Result};
use crate::ndcore::{derive_seed, Matrix, RngState};
use crate::nn::{
    checkpoint, join_name, CellKind, Dense, DenseCache, Mode, Module, RecurrentStack, StackCache, TensorKind,
};
use crate::optim::{train_loop, TrainConfig, TrainOutcome, TrainTask};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VaeConfig {
    /// Weight on the reconstruction term.
    pub alpha: f64,
    pub latent_dim: usize,
    /// Recurrent encoder widths after the input.
    pub encoder_widths: Vec<usize>,
    /// Recurrent decoder widths after the latent input.
    pub decoder_widths: Vec<usize>,
    /// Encoder layer used as the embedding (1 = input).
    pub k: usize,
    /// Share of engines held out for early stopping.
    pub val_fraction: f64,
    pub train: TrainConfig,
}

impl Default for VaeConfig {
    fn default() -> Self {
        Self {
            alpha: 10.0,
            latent_dim: 4,
            encoder_widths: vec![8, 4],
            decoder_widths: vec![8],
            k: 3,
            val_fraction: 0.1,
            train: TrainConfig::default(),
        }
    }
}

impl VaeConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) {
            return Err(Error::Config("vae alpha must be positive".into()));
        }
        if self.latent_dim == 0 || self.encoder_widths.is_empty() || self.decoder_widths.is_empty() {
            return Err(Error::Config("vae widths must be non-empty and positive".into()));
        }
        if self.encoder_widths.iter().chain(&self.decoder_widths).any(|&w| w == 0) {
            return Err(Error::Config("vae layer widths must be positive".into()));
        }
        if self.k == 0 || self.k > self.encoder_widths.len() + 1 {
            return Err(Error::Config(format!(
                "embedding layer k = {} outside 1..={}",
                self.k,
                self.encoder_widths.len() + 1
            )));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("val_fraction must be in [0, 1)".into()));
        }
        self.train.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ElboTerms {
    pub kl: f64,
    pub recon: f64,
    pub weighted_total: f64,
}

impl ElboTerms {
    /// KL plus unweighted reconstruction error.
    pub fn unweighted(&self) -> f64 {
        self.kl + self.recon
    }
}

/// Source of the standard-normal draws used by the reparameterization.
pub enum Noise<'a> {
    Sample(&'a mut RngState),
    /// One `latent × batch` matrix per timestep.
    Fixed(&'a [Matrix]),
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VaeModel {
    pub encoder: RecurrentStack,
    pub mu: Dense,
    pub logvar: Dense,
    pub decoder: RecurrentStack,
    pub output: Dense,
}

pub struct EncodeCache {
    stack: StackCache,
    mu: DenseCache,
    logvar: DenseCache,
    steps: usize,
    batch: usize,
}

pub struct DecodeCache {
    stack: StackCache,
    output: DenseCache,
}

fn flat(seq: &[Matrix]) -> Result<Matrix> {
    Matrix::hcat(seq)
}

fn unflat(m: &Matrix, batch: usize) -> Result<Vec<Matrix>> {
    m.split_columns(batch)
}

fn check_sequence(what: &str, xs: &[Matrix], width: usize) -> Result<usize> {
    let first = xs
        .first()
        .ok_or_else(|| Error::invalid(format!("{what}: empty sequence")))?;
    let batch = first.cols();
    for (t, x) in xs.iter().enumerate() {
        if x.shape() != (width, batch) {
            return Err(Error::invalid(format!(
                "{what}: timestep {t} has shape {:?}, expected {:?}",
                x.shape(),
                (width, batch)
            )));
        }
    }
    Ok(batch)
}

fn check_finite(what: &str, m: &Matrix, batch: usize) -> Result<()> {
    if let Some(i) = m.data().iter().position(|v| !v.is_finite()) {
        let col = i % m.cols();
        return Err(Error::NonFinite(format!(
            "{what} is {} at timestep {}",
            m.data()[i],
            col / batch.max(1)
        )));
    }
    Ok(())
}

/// `−½ Σ (1 + lv − μ² − exp lv)` summed over latent units, averaged over
/// columns (windows × timesteps).
pub fn kl_divergence(mu: &Matrix, logvar: &Matrix) -> Result<f64> {
    if mu.shape() != logvar.shape() {
        return Err(Error::shape("kl_divergence", mu.shape(), logvar.shape()));
    }
    let s: f64 = mu
        .data()
        .iter()
        .zip(logvar.data())
        .map(|(m, lv)| 1.0 + lv - m * m - lv.exp())
        .sum();
    Ok(-0.5 * s / mu.cols().max(1) as f64)
}

/// `z = μ + exp(½ lv) ⊙ ε`, returning `(z, ε)`.
pub fn reparameterize(mu: &[Matrix], logvar: &[Matrix], noise: Noise<'_>) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
    if mu.len() != logvar.len() {
        return Err(Error::invalid("mu and logvar sequences differ in length"));
    }
    let eps: Vec<Matrix> = match noise {
        Noise::Sample(rng) => mu.iter().map(|m| rng.randn(m.rows(), m.cols())).collect(),
        Noise::Fixed(e) => {
            if e.len() != mu.len() {
                return Err(Error::invalid("fixed noise length differs from sequence"));
            }
            e.to_vec()
        }
        Noise::Zero => mu.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect(),
    };
    let mut zs = Vec::with_capacity(mu.len());
    for ((m, lv), e) in mu.iter().zip(logvar).zip(&eps) {
        if m.shape() != lv.shape() || m.shape() != e.shape() {
            return Err(Error::shape("reparameterize", m.shape(), lv.shape()));
        }
        let data = m
            .data()
            .iter()
            .zip(lv.data())
            .zip(e.data())
            .map(|((m, lv), e)| m + (0.5 * lv).exp() * e)
            .collect();
        zs.push(Matrix::new(m.rows(), m.cols(), data)?);
    }
    Ok((zs, eps))
}

impl VaeModel {
    pub fn new(input: usize, config: &VaeConfig, rng: &mut RngState) -> Self {
        let mut enc = vec![input];
        enc.extend(&config.encoder_widths);
        let mut dec = vec![config.latent_dim];
        dec.extend(&config.decoder_widths);
        Self::with_widths(&enc, config.latent_dim, &dec, rng)
    }

    /// `encoder[0]` is the sensor width and `decoder[0]` the latent width.
    pub fn with_widths(encoder: &[usize], latent: usize, decoder: &[usize], rng: &mut RngState) -> Self {
        let encoder_stack = RecurrentStack::new(CellKind::Gru, encoder, &vec![true; encoder.len() - 1], rng);
        let top = *encoder.last().expect("encoder widths");
        let mu = Dense::new(top, latent, rng);
        let logvar = Dense::new(top, latent, rng);
        let decoder_stack = RecurrentStack::new(CellKind::Gru, decoder, &vec![true; decoder.len() - 1], rng);
        let output = Dense::new(*decoder.last().expect("decoder widths"), encoder[0], rng);
        Self {
            encoder: encoder_stack,
            mu,
            logvar,
            decoder: decoder_stack,
            output,
        }
    }

    pub fn input_width(&self) -> usize {
        self.encoder.input_width()
    }

    pub fn latent_dim(&self) -> usize {
        self.mu.output_width()
    }

    pub fn encoder_widths(&self) -> Vec<usize> {
        self.encoder.widths()
    }

    pub fn decoder_widths(&self) -> Vec<usize> {
        self.decoder.widths()
    }

    /// Posterior parameters per timestep.
    pub fn encode(&mut self, xs: &[Matrix], mode: Mode) -> Result<(Vec<Matrix>, Vec<Matrix>, EncodeCache)> {
        let batch = check_sequence("encode", xs, self.input_width())?;
        let (h, stack) = self.encoder.forward(xs, mode)?;
        let hf = flat(&h)?;
        let (mu, mu_cache) = self.mu.forward(&hf)?;
        let (lv, lv_cache) = self.logvar.forward(&hf)?;
        check_finite("posterior mean", &mu, batch)?;
        check_finite("posterior log-variance", &lv, batch)?;
        let cache = EncodeCache {
            stack,
            mu: mu_cache,
            logvar: lv_cache,
            steps: xs.len(),
            batch,
        };
        Ok((unflat(&mu, batch)?, unflat(&lv, batch)?, cache))
    }

    /// Reconstruction mean per timestep.
    pub fn decode(&mut self, zs: &[Matrix], mode: Mode) -> Result<(Vec<Matrix>, DecodeCache)> {
        let batch = check_sequence("decode", zs, self.latent_dim())?;
        let (d, stack) = self.decoder.forward(zs, mode)?;
        let (y, output) = self.output.forward(&flat(&d)?)?;
        check_finite("reconstruction", &y, batch)?;
        Ok((unflat(&y, batch)?, DecodeCache { stack, output }))
    }

    /// Loss terms without gradients.
    pub fn elbo(&mut self, xs: &[Matrix], noise: Noise<'_>, alpha: f64, mode: Mode) -> Result<ElboTerms> {
        let (mu, lv, _) = self.encode(xs, mode)?;
        let (zs, _) = reparameterize(&mu, &lv, noise)?;
        let (xhat, _) = self.decode(&zs, mode)?;
        terms(xs, &xhat, &flat(&mu)?, &flat(&lv)?, alpha)
    }

    /// Loss terms and gradients of `weighted_total` in parameter order.
    pub fn elbo_grad(
        &mut self,
        xs: &[Matrix],
        noise: Noise<'_>,
        alpha: f64,
        mode: Mode,
    ) -> Result<(ElboTerms, Vec<Matrix>)> {
        let (mu_seq, lv_seq, enc) = self.encode(xs, mode)?;
        let (zs, eps) = reparameterize(&mu_seq, &lv_seq, noise)?;
        let (xhat, dec) = self.decode(&zs, mode)?;
        let mu = flat(&mu_seq)?;
        let lv = flat(&lv_seq)?;
        let t = terms(xs, &xhat, &mu, &lv, alpha)?;

        let batch = enc.batch;
        let cols = (enc.steps * batch) as f64;
        let n_recon = cols * self.input_width() as f64;
        let x = flat(xs)?;
        let y = flat(&xhat)?;
        let dy_data = y
            .data()
            .iter()
            .zip(x.data())
            .map(|(a, b)| 2.0 * alpha * (a - b) / n_recon)
            .collect();
        let dy = Matrix::new(y.rows(), y.cols(), dy_data)?;
        let (dd, g_out) = self.output.backward(dec.output, &dy)?;
        let (dzs, g_dec) = self.decoder.backward(dec.stack, &unflat(&dd, batch)?)?;
        let dz = flat(&dzs)?;
        let e = flat(&eps)?;

        let n = mu.data().len();
        let mut dmu = vec![0.0; n];
        let mut dlv = vec![0.0; n];
        for i in 0..n {
            let sd = (0.5 * lv.data()[i]).exp();
            dmu[i] = dz.data()[i] + mu.data()[i] / cols;
            dlv[i] = dz.data()[i] * e.data()[i] * 0.5 * sd + 0.5 * (lv.data()[i].exp() - 1.0) / cols;
        }
        let dmu = Matrix::new(mu.rows(), mu.cols(), dmu)?;
        let dlv = Matrix::new(lv.rows(), lv.cols(), dlv)?;
        let (dh_mu, g_mu) = self.mu.backward(enc.mu, &dmu)?;
        let (dh_lv, g_lv) = self.logvar.backward(enc.logvar, &dlv)?;
        let mut dh = dh_mu;
        dh.add_assign(&dh_lv)?;
        let (_, g_enc) = self.encoder.backward(enc.stack, &unflat(&dh, batch)?)?;

        let mut grads = g_enc;
        grads.extend(g_mu.into_vec());
        grads.extend(g_lv.into_vec());
        grads.extend(g_dec);
        grads.extend(g_out.into_vec());
        Ok((t, grads))
    }

    /// Deterministic activations of encoder layer `k`: 1 is the input, 2 the
    /// first recurrent layer, and so on. Batch normalization uses its
    /// running statistics and nothing is sampled.
    pub fn embed(&self, xs: &[Matrix], k: usize) -> Result<Vec<Matrix>> {
        let max = self.encoder.depth() + 1;
        if k == 0 || k > max {
            return Err(Error::invalid(format!("embedding layer k = {k} outside 1..={max}")));
        }
        check_sequence("embed", xs, self.input_width())?;
        self.encoder.infer_prefix(xs, k - 1)
    }

    pub fn embed_width(&self, k: usize) -> Result<usize> {
        self.encoder_widths()
            .get(k.wrapping_sub(1))
            .copied()
            .ok_or_else(|| Error::invalid(format!("embedding layer k = {k} out of range")))
    }

    /// Embeds every window of `set`, keeping ids and labels.
    pub fn embed_set(&self, set: &WindowSet, k: usize) -> Result<WindowSet> {
        let width = self.embed_width(k)?;
        let mut out = WindowSet::empty(set.steps, width, set.labels.is_some());
        out.labels = set.labels.clone();
        out.engine_ids = set.engine_ids.clone();
        out.data.reserve(set.len() * set.steps * width);
        let idx: Vec<usize> = (0..set.len()).collect();
        for chunk in idx.chunks(EMBED_CHUNK) {
            let zs = self.embed(&set.batch(chunk), k)?;
            let part = WindowSet::from_batch(&zs, vec![0; chunk.len()], None)?;
            out.data.extend_from_slice(&part.data);
        }
        Ok(out)
    }
}

const EMBED_CHUNK: usize = 512;

fn terms(xs: &[Matrix], xhat: &[Matrix], mu: &Matrix, lv: &Matrix, alpha: f64) -> Result<ElboTerms> {
    let x = flat(xs)?;
    let y = flat(xhat)?;
    if x.shape() != y.shape() {
        return Err(Error::shape("reconstruction", x.shape(), y.shape()));
    }
    let recon = x
        .data()
        .iter()
        .zip(y.data())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / x.data().len() as f64;
    let kl = kl_divergence(mu, lv)?;
    let weighted_total = kl + alpha * recon;
    if !weighted_total.is_finite() {
        return Err(Error::NonFinite(format!("elbo terms kl {kl}, recon {recon}")));
    }
    Ok(ElboTerms {
        kl,
        recon,
        weighted_total,
    })
}

impl Module for VaeModel {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix, TensorKind)) {
        self.encoder.visit(&join_name(prefix, "encoder"), f);
        self.mu.visit(&join_name(prefix, "mu"), f);
        self.logvar.visit(&join_name(prefix, "logvar"), f);
        self.decoder.visit(&join_name(prefix, "decoder"), f);
        self.output.visit(&join_name(prefix, "output"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix, TensorKind)) {
        self.encoder.visit_mut(&join_name(prefix, "encoder"), f);
        self.mu.visit_mut(&join_name(prefix, "mu"), f);
        self.logvar.visit_mut(&join_name(prefix, "logvar"), f);
        self.decoder.visit_mut(&join_name(prefix, "decoder"), f);
        self.output.visit_mut(&join_name(prefix, "output"), f);
    }
}

const VAL_NOISE_TAG: u64 = 0x7661_6c5f_6e6f_6973;
const HOLDOUT_TAG: u64 = 0x686f_6c64_6f75_7431;

struct VaeTask<'a> {
    train: &'a WindowSet,
    val: Option<&'a WindowSet>,
    alpha: f64,
    val_seed: u64,
}

impl TrainTask for VaeTask<'_> {
    type Model = VaeModel;

    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn batch_loss_grad(&self, model: &mut VaeModel, batch: &[usize], rng: &mut RngState) -> Result<(f64, Vec<Matrix>)> {
        let xs = self.train.batch(batch);
        let (t, g) = model.elbo_grad(&xs, Noise::Sample(rng), self.alpha, Mode::Train)?;
        Ok((t.weighted_total, g))
    }

    fn validation_loss(&self, model: &VaeModel) -> Result<Option<f64>> {
        match self.val {
            Some(v) => Ok(Some(evaluate(model, v, self.val_seed)?.unweighted())),
            None => Ok(None),
        }
    }
}

/// Eval-mode loss terms over `set` (α = 1), averaged per window, with noise
/// drawn from a stream seeded by `seed`.
pub fn evaluate(model: &VaeModel, set: &WindowSet, seed: u64) -> Result<ElboTerms> {
    if set.is_empty() {
        return Err(Error::invalid("evaluate: empty window set"));
    }
    let mut rng = RngState::new(seed);
    let mut m = model.clone();
    let (mut kl, mut recon) = (0.0, 0.0);
    let idx: Vec<usize> = (0..set.len()).collect();
    for chunk in idx.chunks(EMBED_CHUNK) {
        let t = m.elbo(&set.batch(chunk), Noise::Sample(&mut rng), 1.0, Mode::Eval)?;
        kl += t.kl * chunk.len() as f64;
        recon += t.recon * chunk.len() as f64;
    }
    let n = set.len() as f64;
    let (kl, recon) = (kl / n, recon / n);
    Ok(ElboTerms {
        kl,
        recon,
        weighted_total: kl + recon,
    })
}

/// Fits a VAE on every window of `windows` (labels are ignored), holding out
/// `val_fraction` of the engines for early stopping on the unweighted loss.
pub fn train_vae(windows: &WindowSet, config: &VaeConfig) -> Result<TrainOutcome<VaeModel>> {
    config.validate()?;
    if windows.is_empty() {
        return Err(Error::Data("train_vae: no windows".into()));
    }
    let seed = config.train.seed;
    let mut rng = RngState::new(derive_seed(seed, &[HOLDOUT_TAG]));
    let (train, val) = holdout_engines(windows, config.val_fraction, &mut rng);
    let model = VaeModel::new(windows.width, config, &mut rng);
    let task = VaeTask {
        train: &train,
        val: val.as_ref(),
        alpha: config.alpha,
        val_seed: derive_seed(seed, &[VAL_NOISE_TAG]),
    };
    train_loop(model, &task, &config.train)
}

/// Held-out windows as `train_vae` chose them for a given seed and fraction.
pub fn validation_windows(windows: &WindowSet, config: &VaeConfig) -> Option<WindowSet> {
    let mut rng = RngState::new(derive_seed(config.train.seed, &[HOLDOUT_TAG]));
    holdout_engines(windows, config.val_fraction, &mut rng).1
}

/// Seed of the noise stream `train_vae` uses for validation.
pub fn validation_seed(config: &VaeConfig) -> u64 {
    derive_seed(config.train.seed, &[VAL_NOISE_TAG])
}

/// Sidecar describing a saved VAE.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeMetadata {
    pub alpha: f64,
    pub k: usize,
    pub latent_dim: usize,
    pub encoder_widths: Vec<usize>,
    pub decoder_widths: Vec<usize>,
    pub sensors: Vec<String>,
    pub normalization_hash: String,
}

fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

/// Writes the checkpoint at `path` and metadata next to it (`.json`).
pub fn save_vae(model: &VaeModel, meta: &VaeMetadata, path: &Path) -> Result<()> {
    checkpoint::save(model, path)?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

pub fn load_vae(path: &Path) -> Result<(VaeModel, VaeMetadata)> {
    let side = sidecar_path(path);
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: VaeMetadata =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", side.display())))?;
    if meta.encoder_widths.len() < 2 || meta.decoder_widths.len() < 2 {
        return Err(Error::Checkpoint("sidecar widths are incomplete".into()));
    }
    let mut model = VaeModel::with_widths(
        &meta.encoder_widths,
        meta.latent_dim,
        &meta.decoder_widths,
        &mut RngState::new(0),
    );
    checkpoint::load(&mut model, path)?;
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_model(input: usize) -> VaeModel {
        let mut m = VaeModel::new(input, &VaeConfig::default(), &mut RngState::new(1));
        for p in m.params_mut() {
            p.fill(0.0);
        }
        m
    }

    fn seq(rng: &mut RngState, t: usize, w: usize, b: usize) -> Vec<Matrix> {
        (0..t).map(|_| rng.randn(w, b)).collect()
    }

    #[test]
    fn kl_closed_form_examples() {
        assert_eq!(kl_divergence(&Matrix::zeros(3, 2), &Matrix::zeros(3, 2)).unwrap(), 0.0);
        let kl = kl_divergence(&Matrix::filled(1, 1, 1.0), &Matrix::zeros(1, 1)).unwrap();
        assert!((kl - 0.5).abs() < 1e-15);
    }

    #[test]
    fn encode_shapes_and_zero_model() {
        let mut m = zero_model(5);
        let xs = seq(&mut RngState::new(2), 4, 5, 3);
        let (mu, lv, _) = m.encode(&xs, Mode::Eval).unwrap();
        assert_eq!(mu.len(), 4);
        assert_eq!(mu[0].shape(), (4, 3));
        assert!(mu.iter().chain(&lv).all(|x| x.data().iter().all(|&v| v == 0.0)));
        assert!(m.encode(&seq(&mut RngState::new(2), 4, 6, 3), Mode::Eval).is_err());
    }

    #[test]
    fn zero_decoder_outputs_its_bias() {
        let mut m = zero_model(5);
        m.output.b = Matrix::column(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let zs = seq(&mut RngState::new(3), 3, 4, 2);
        let (y, _) = m.decode(&zs, Mode::Eval).unwrap();
        assert_eq!(y.len(), 3);
        for step in &y {
            assert_eq!(step.shape(), (5, 2));
            assert_eq!(step.col_to_vec(1), vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        }
        assert!(m.decode(&seq(&mut RngState::new(3), 3, 3, 2), Mode::Eval).is_err());
    }

    #[test]
    fn reparameterize_limits() {
        let mut rng = RngState::new(4);
        let mu = vec![rng.randn(3, 4)];
        let lv = vec![Matrix::filled(3, 4, -60.0)];
        let (z, _) = reparameterize(&mu, &lv, Noise::Sample(&mut rng)).unwrap();
        for (a, b) in z[0].data().iter().zip(mu[0].data()) {
            assert!((a - b).abs() < 1e-12);
        }
        let (z, _) = reparameterize(&mu, &[rng.randn(3, 4)], Noise::Zero).unwrap();
        assert_eq!(z[0], mu[0]);
    }

    #[test]
    fn reparameterized_variance_is_one() {
        let mut rng = RngState::new(5);
        let n = 100_000;
        let (z, _) = reparameterize(&[Matrix::zeros(1, n)], &[Matrix::zeros(1, n)], Noise::Sample(&mut rng)).unwrap();
        let mean = z[0].sum() / n as f64;
        let var = z[0].data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn alpha_raises_weighted_total() {
        let mut rng = RngState::new(6);
        let mut m = VaeModel::new(4, &VaeConfig::default(), &mut rng);
        let xs = seq(&mut rng, 3, 4, 5);
        let a = m.clone().elbo(&xs, Noise::Zero, 1.0, Mode::Eval).unwrap();
        let b = m.elbo(&xs, Noise::Zero, 2.0, Mode::Eval).unwrap();
        assert!(a.recon > 0.0 && a.kl >= -1e-12);
        assert!(b.weighted_total > a.weighted_total);
        assert!((b.weighted_total - (b.kl + 2.0 * b.recon)).abs() < 1e-12);
    }

    #[test]
    fn embed_is_deterministic_and_sized() {
        let mut rng = RngState::new(7);
        let m = VaeModel::new(17, &VaeConfig::default(), &mut rng);
        let xs = seq(&mut rng, 5, 17, 3);
        let a = m.embed(&xs, 3).unwrap();
        assert_eq!(a[0].shape(), (4, 3));
        assert_eq!(a, m.embed(&xs, 3).unwrap());
        assert_eq!(m.embed(&xs, 2).unwrap()[0].rows(), 8);
        assert_eq!(m.embed(&xs, 1).unwrap(), xs);
        assert!(m.embed(&xs, 0).is_err());
        assert!(m.embed(&xs, 4).is_err());
    }

    #[test]
    fn identical_windows_embed_identically() {
        let mut rng = RngState::new(8);
        let m = VaeModel::new(3, &VaeConfig::default(), &mut rng);
        let col = rng.randn(3, 1);
        let xs: Vec<Matrix> = (0..4)
            .map(|_| Matrix::hcat(&[col.clone(), col.clone()]).unwrap())
            .collect();
        for z in m.embed(&xs, 3).unwrap() {
            assert_eq!(z.col_to_vec(0), z.col_to_vec(1));
        }
    }

    #[test]
    fn save_and_load_round_trip() {
        let mut rng = RngState::new(9);
        let m = VaeModel::new(6, &VaeConfig::default(), &mut rng);
        let meta = VaeMetadata {
            alpha: 10.0,
            k: 3,
            latent_dim: 4,
            encoder_widths: m.encoder_widths(),
            decoder_widths: m.decoder_widths(),
            sensors: vec!["s2".into()],
            normalization_hash: "abc".into(),
        };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("vae.ckpt");
        save_vae(&m, &meta, &path).unwrap();
        let (back, meta2) = load_vae(&path).unwrap();
        assert_eq!(back, m);
        assert_eq!(meta2, meta);
    }

    #[test]
    fn config_validation() {
        assert!(VaeConfig::default().validate().is_ok());
        assert!(VaeConfig {
            alpha: 0.0,
            ..VaeConfig::default()
        }
        .validate()
        .is_err());
        assert!(VaeConfig {
            k: 4,
            ..VaeConfig::default()
        }
        .validate()
        .is_err());
    }
}
