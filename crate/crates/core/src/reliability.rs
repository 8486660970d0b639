//! Recurrent RUL regressors: supervised training on raw or embedded
//! windows, single-iteration self-learning, and seed ensembles.

use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{holdout_engines, WindowSet};
use crate::error::{Error, Result};
use crate::ndcore::{derive_seed, Matrix, RngState};
use crate::nn::{checkpoint, join_name, CellKind, Dense, Mode, Module, RecurrentStack, TensorKind};
use crate::optim::{train_loop, TrainConfig, TrainOutcome, TrainTask};
use crate::vae::VaeModel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RulConfig {
    /// GRU widths after the input.
    pub widths: Vec<usize>,
    pub batch_norm: bool,
    /// Predictions are clipped to `[0, max_rul]`; targets are divided by
    /// it during training.
    pub max_rul: f64,
    pub val_fraction: f64,
    pub train: TrainConfig,
}

impl Default for RulConfig {
    fn default() -> Self {
        Self {
            widths: vec![64, 32, 16, 8],
            batch_norm: false,
            max_rul: 140.0,
            val_fraction: 0.1,
            train: TrainConfig::default(),
        }
    }
}

impl RulConfig {
    pub fn validate(&self) -> Result<()> {
        if self.widths.is_empty() || self.widths.contains(&0) {
            return Err(Error::Config("rul widths must be non-empty and positive".into()));
        }
        if !(self.max_rul > 0.0) {
            return Err(Error::Config("max_rul must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.val_fraction) {
            return Err(Error::Config("val_fraction must be in [0, 1)".into()));
        }
        self.train.validate()
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.train.seed = seed;
        c
    }
}

/// GRU stack read out at the final timestep by a dense scalar head.
#[derive(Debug, Clone, PartialEq)]
pub struct RulModel {
    pub stack: RecurrentStack,
    pub head: Dense,
    /// Cycles per unit of head output.
    pub scale: f64,
}

impl RulModel {
    pub fn new(input: usize, config: &RulConfig, rng: &mut RngState) -> Self {
        let mut widths = vec![input];
        widths.extend(&config.widths);
        let norms = vec![config.batch_norm; config.widths.len()];
        let stack = RecurrentStack::new(CellKind::Gru, &widths, &norms, rng);
        let head = Dense::new(*widths.last().expect("widths"), 1, rng);
        Self {
            stack,
            head,
            scale: config.max_rul,
        }
    }

    pub fn input_width(&self) -> usize {
        self.stack.input_width()
    }

    /// Unclipped final-step outputs in cycles.
    pub fn raw_predict(&self, xs: &[Matrix]) -> Result<Vec<f64>> {
        if xs.first().map(Matrix::rows) != Some(self.input_width()) {
            return Err(Error::invalid(format!(
                "window width {:?} does not match model input {}",
                xs.first().map(Matrix::rows),
                self.input_width()
            )));
        }
        let h = self.stack.infer(xs)?;
        let y = self.head.infer(h.last().expect("non-empty sequence"))?;
        Ok(y.data().iter().map(|v| v * self.scale).collect())
    }

    /// Mean squared error in units of `scale` and its gradient, for
    /// targets in cycles.
    pub fn loss_grad(&mut self, xs: &[Matrix], targets: &Matrix, mode: Mode) -> Result<(f64, Vec<Matrix>)> {
        let (h, cache) = self.stack.forward(xs, mode)?;
        let last = h.last().expect("non-empty sequence");
        let (y, head_cache) = self.head.forward(last)?;
        let b = y.cols() as f64;
        let mut loss = 0.0;
        let mut dy = Matrix::zeros(1, y.cols());
        for (i, (p, t)) in y.data().iter().zip(targets.data()).enumerate() {
            let d = p - t / self.scale;
            loss += d * d / b;
            dy.data_mut()[i] = 2.0 * d / b;
        }
        let (dh, g_head) = self.head.backward(head_cache, &dy)?;
        let mut d_out: Vec<Matrix> = h.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect();
        *d_out.last_mut().expect("non-empty") = dh;
        let (_, mut grads) = self.stack.backward(cache, &d_out)?;
        grads.extend(g_head.into_vec());
        Ok((loss, grads))
    }
}

impl Module for RulModel {
    fn visit<'a>(&'a self, prefix: &str, f: &mut dyn FnMut(String, &'a Matrix, TensorKind)) {
        self.stack.visit(&join_name(prefix, "stack"), f);
        self.head.visit(&join_name(prefix, "head"), f);
    }

    fn visit_mut<'a>(&'a mut self, prefix: &str, f: &mut dyn FnMut(String, &'a mut Matrix, TensorKind)) {
        self.stack.visit_mut(&join_name(prefix, "stack"), f);
        self.head.visit_mut(&join_name(prefix, "head"), f);
    }
}

const CHUNK: usize = 512;

/// Final-timestep prediction per window, clipped to `[0, scale]`.
pub fn predict_rul(model: &RulModel, set: &WindowSet) -> Result<Vec<f64>> {
    if set.width != model.input_width() {
        return Err(Error::invalid(format!(
            "window width {} does not match model input {}",
            set.width,
            model.input_width()
        )));
    }
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut out = Vec::with_capacity(set.len());
    for chunk in idx.chunks(CHUNK) {
        let raw = model.raw_predict(&set.batch(chunk))?;
        out.extend(raw.into_iter().map(|v| v.clamp(0.0, model.scale)));
    }
    Ok(out)
}

fn mean_loss(model: &RulModel, set: &WindowSet) -> Result<f64> {
    let labels = set.labels()?;
    let idx: Vec<usize> = (0..set.len()).collect();
    let mut sum = 0.0;
    for chunk in idx.chunks(CHUNK) {
        let raw = model.raw_predict(&set.batch(chunk))?;
        for (p, &i) in raw.iter().zip(chunk) {
            let d = (p - labels[i]) / model.scale;
            sum += d * d;
        }
    }
    Ok(sum / set.len() as f64)
}

struct RulTask<'a> {
    train: &'a WindowSet,
    val: Option<&'a WindowSet>,
}

impl TrainTask for RulTask<'_> {
    type Model = RulModel;

    fn train_len(&self) -> usize {
        self.train.len()
    }

    fn batch_loss_grad(
        &self,
        model: &mut RulModel,
        batch: &[usize],
        _rng: &mut RngState,
    ) -> Result<(f64, Vec<Matrix>)> {
        let xs = self.train.batch(batch);
        let y = self.train.label_batch(batch)?;
        model.loss_grad(&xs, &y, Mode::Train)
    }

    fn validation_loss(&self, model: &RulModel) -> Result<Option<f64>> {
        self.val.map(|v| mean_loss(model, v)).transpose()
    }
}

const HOLDOUT_TAG: u64 = 0x7275_6c5f_686f_6c64;

/// Fits a model to labeled windows by mean squared error, holding out a
/// share of the engines for early stopping when there are enough.
pub fn train_supervised(labeled: &WindowSet, config: &RulConfig) -> Result<TrainOutcome<RulModel>> {
    config.validate()?;
    if labeled.is_empty() {
        return Err(Error::Data("no labeled windows".into()));
    }
    labeled.labels()?;
    let mut rng = RngState::new(derive_seed(config.train.seed, &[HOLDOUT_TAG]));
    let (train, val) = holdout_engines(labeled, config.val_fraction, &mut rng);
    let model = RulModel::new(labeled.width, config, &mut rng);
    let task = RulTask {
        train: &train,
        val: val.as_ref(),
    };
    train_loop(model, &task, &config.train)
}

/// A deterministic map from sensor windows to feature windows.
pub trait Embedding {
    fn output_width(&self) -> usize;
    fn embed_set(&self, set: &WindowSet) -> Result<WindowSet>;
}

/// Leaves windows unchanged.
pub struct IdentityEmbedding {
    pub width: usize,
}

impl Embedding for IdentityEmbedding {
    fn output_width(&self) -> usize {
        self.width
    }

    fn embed_set(&self, set: &WindowSet) -> Result<WindowSet> {
        Ok(set.clone())
    }
}

/// Encoder layer `k` of a trained VAE.
pub struct VaeEmbedding<'a> {
    pub model: &'a VaeModel,
    pub k: usize,
}

impl Embedding for VaeEmbedding<'_> {
    fn output_width(&self) -> usize {
        self.model.embed_width(self.k).unwrap_or(0)
    }

    fn embed_set(&self, set: &WindowSet) -> Result<WindowSet> {
        self.model.embed_set(set, self.k)
    }
}

/// Embeds the labeled windows and trains on the embedded pairs exactly as
/// [`train_supervised`] does.
pub fn train_on_embedding(
    embedding: &dyn Embedding,
    labeled: &WindowSet,
    config: &RulConfig,
) -> Result<TrainOutcome<RulModel>> {
    let z = embedding.embed_set(labeled)?;
    if z.width != embedding.output_width() {
        return Err(Error::invalid(format!(
            "embedding produced width {}, declared {}",
            z.width,
            embedding.output_width()
        )));
    }
    train_supervised(&z, config)
}

#[derive(Debug, Clone)]
pub struct SelfLearningOutcome {
    pub base: TrainOutcome<RulModel>,
    pub model: TrainOutcome<RulModel>,
    pub pseudo_labels: Vec<f64>,
}

/// One round of self-training: fit on the labeled windows, label the
/// unlabeled ones with clipped predictions, refit from scratch on both.
pub fn self_learning(labeled: &WindowSet, unlabeled: &WindowSet, config: &RulConfig) -> Result<SelfLearningOutcome> {
    let base = train_supervised(labeled, config)?;
    if unlabeled.is_empty() {
        return Ok(SelfLearningOutcome {
            model: base.clone(),
            base,
            pseudo_labels: Vec::new(),
        });
    }
    let pseudo = predict_rul(&base.model, unlabeled)?;
    let pseudo_set = unlabeled.with_labels(pseudo.clone())?;
    let combined = WindowSet::concat(&[labeled, &pseudo_set])?;
    let model = train_supervised(&combined, config)?;
    Ok(SelfLearningOutcome {
        base,
        model,
        pseudo_labels: pseudo,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub members: Vec<RulModel>,
}

impl Ensemble {
    pub fn new(members: Vec<RulModel>) -> Result<Self> {
        let first = members
            .first()
            .ok_or_else(|| Error::invalid("an ensemble needs at least one member"))?;
        if members.iter().any(|m| m.input_width() != first.input_width()) {
            return Err(Error::invalid("ensemble members differ in input width"));
        }
        Ok(Self { members })
    }

    /// Trains `size` members with seeds `seed + i`.
    pub fn train(size: usize, config: &RulConfig, mut fit: impl FnMut(&RulConfig) -> Result<RulModel>) -> Result<Self> {
        let members = (0..size as u64)
            .map(|i| fit(&config.with_seed(config.train.seed.wrapping_add(i))))
            .collect::<Result<Vec<_>>>()?;
        Self::new(members)
    }

    pub fn input_width(&self) -> usize {
        self.members[0].input_width()
    }
}

/// Mean of the members' clipped predictions, clipped again.
pub fn ensemble_predict(ensemble: &Ensemble, set: &WindowSet) -> Result<Vec<f64>> {
    if ensemble.members.is_empty() {
        return Err(Error::invalid("empty ensemble"));
    }
    let mut sum = vec![0.0; set.len()];
    for m in &ensemble.members {
        for (s, p) in sum.iter_mut().zip(predict_rul(m, set)?) {
            *s += p;
        }
    }
    let n = ensemble.members.len() as f64;
    let cap = ensemble.members[0].scale;
    Ok(sum.into_iter().map(|s| (s / n).clamp(0.0, cap)).collect())
}

/// `engine_id,true_rul,predicted_rul` rows.
pub fn write_predictions(path: &Path, ids: &[u32], truth: &[f64], pred: &[f64]) -> Result<()> {
    if ids.len() != truth.len() || ids.len() != pred.len() {
        return Err(Error::invalid("prediction dump columns differ in length"));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut text = String::from("engine_id,true_rul,predicted_rul\n");
    for ((id, t), p) in ids.iter().zip(truth).zip(pred) {
        text.push_str(&format!("{id},{t},{p}\n"));
    }
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Sidecar describing a saved ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RulMetadata {
    pub input_width: usize,
    pub widths: Vec<usize>,
    pub batch_norm: bool,
    pub max_rul: f64,
    pub members: usize,
    /// VAE checkpoint and layer the inputs are embedded with, if any.
    pub embedding: Option<(PathBuf, usize)>,
}

fn member_path(path: &Path, i: usize) -> PathBuf {
    path.with_extension(format!("m{i}.ckpt"))
}

/// Writes `<path>.json` plus one checkpoint per member.
pub fn save_ensemble(ensemble: &Ensemble, meta: &RulMetadata, path: &Path) -> Result<()> {
    for (i, m) in ensemble.members.iter().enumerate() {
        checkpoint::save(m, &member_path(path, i))?;
    }
    let side = path.with_extension("json");
    let json = serde_json::to_string_pretty(meta).map_err(|e| Error::Checkpoint(e.to_string()))?;
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

pub fn load_ensemble(path: &Path) -> Result<(Ensemble, RulMetadata)> {
    let side = path.with_extension("json");
    let text = std::fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
    let meta: RulMetadata =
        serde_json::from_str(&text).map_err(|e| Error::Checkpoint(format!("{}: {e}", side.display())))?;
    let cfg = RulConfig {
        widths: meta.widths.clone(),
        batch_norm: meta.batch_norm,
        max_rul: meta.max_rul,
        ..RulConfig::default()
    };
    let mut members = Vec::with_capacity(meta.members);
    for i in 0..meta.members {
        let mut m = RulModel::new(meta.input_width, &cfg, &mut RngState::new(0));
        checkpoint::load(&mut m, &member_path(path, i))?;
        members.push(m);
    }
    Ok((Ensemble::new(members)?, meta))
}
