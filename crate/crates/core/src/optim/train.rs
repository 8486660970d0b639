use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use tracing::debug;

use super::{clip_global_norm, AdamConfig, AdamState};
use crate::error::{Error, Result};
use crate::ndcore::{Matrix, RngState};
use crate::nn::Module;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Minimum decrease of the monitored loss that counts as improvement.
    pub tolerance: f64,
    /// Epochs without improvement before stopping.
    pub patience: usize,
    pub seed: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Global gradient-norm cap; `0` disables clipping.
    pub clip_norm: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            batch_size: 100,
            max_epochs: 500,
            tolerance: 0.0,
            patience: 20,
            seed: 0,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            eps: adam.eps,
            clip_norm: 5.0,
        }
    }
}

impl TrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if !(self.lr >= 0.0) || !(self.tolerance >= 0.0) || !(self.clip_norm >= 0.0) {
            return Err(Error::Config("lr, tolerance and clip_norm must be non-negative".into()));
        }
        Ok(())
    }
}

/// A model plus the data and loss it is fit to.
pub trait TrainTask {
    type Model: Module + Clone;

    fn train_len(&self) -> usize;

    /// Mean per-sample loss over `batch` and its gradient, ordered like
    /// `model.params()`. May update non-trainable state (batch statistics).
    fn batch_loss_grad(
        &self,
        model: &mut Self::Model,
        batch: &[usize],
        rng: &mut RngState,
    ) -> Result<(f64, Vec<Matrix>)>;

    /// Mean per-sample loss on held-out data, if the task has any.
    fn validation_loss(&self, model: &Self::Model) -> Result<Option<f64>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome<M> {
    /// Snapshot with the best monitored loss.
    pub model: M,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Shuffles `0..n` and cuts it into consecutive batches of `size`; the last
/// batch may be short.
pub fn minibatches(rng: &mut RngState, n: usize, size: usize) -> Result<Vec<Vec<usize>>> {
    if size == 0 || size > n {
        return Err(Error::invalid(format!("minibatch size {size} must be in 1..={n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    Ok(order.chunks(size).map(<[usize]>::to_vec).collect())
}

/// Full-dataset loss estimate `(n / M) · Σ_batch loss`.
pub fn minibatch_loss_scale(total_n: usize, batch_n: usize, batch_loss_sum: f64) -> Result<f64> {
    if total_n == 0 || batch_n == 0 {
        return Err(Error::invalid("minibatch_loss_scale needs positive counts"));
    }
    Ok(total_n as f64 / batch_n as f64 * batch_loss_sum)
}

/// Mini-batch Adam with early stopping on the validation loss (or the
/// training loss when the task has no validation split).
pub fn train_loop<T: TrainTask>(mut model: T::Model, task: &T, config: &TrainConfig) -> Result<TrainOutcome<T::Model>> {
    config.validate()?;
    let n = task.train_len();
    if n == 0 {
        return Err(Error::invalid("train_loop: empty training set"));
    }
    let batch_size = config.batch_size.min(n);
    let mut rng = RngState::new(config.seed);
    let mut adam = AdamState::new(&model.params(), config.adam());

    let mut history = Vec::new();
    let mut best = model.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut stale = 0;

    for epoch in 1..=config.max_epochs {
        let batches = minibatches(&mut rng, n, batch_size)?;
        let mut estimate_sum = 0.0;
        for (b, batch) in batches.iter().enumerate() {
            let (mean_loss, mut grads) = task.batch_loss_grad(&mut model, batch, &mut rng)?;
            if !mean_loss.is_finite() {
                return Err(Error::NonFinite(format!(
                    "training loss is {mean_loss} at epoch {epoch}, batch {b}"
                )));
            }
            estimate_sum += minibatch_loss_scale(n, batch.len(), mean_loss * batch.len() as f64)?;
            if config.clip_norm > 0.0 {
                clip_global_norm(&mut grads, config.clip_norm);
            }
            adam.step(model.params_mut(), &grads).map_err(|e| match e {
                Error::NonFinite(msg) => Error::NonFinite(format!("{msg} (epoch {epoch}, batch {b})")),
                other => other,
            })?;
        }
        let train_loss = estimate_sum / batches.len() as f64 / n as f64;
        let val_loss = task.validation_loss(&model)?;
        if let Some(v) = val_loss {
            if !v.is_finite() {
                return Err(Error::NonFinite(format!("validation loss is {v} at epoch {epoch}")));
            }
        }
        history.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
        });
        debug!(epoch, train_loss, ?val_loss, "epoch done");

        let monitored = val_loss.unwrap_or(train_loss);
        if monitored < best_loss - config.tolerance {
            best_loss = monitored;
            best = model.clone();
            best_epoch = epoch;
            stale = 0;
        } else {
            stale += 1;
            if stale >= config.patience {
                break;
            }
        }
    }
    if best_epoch == 0 {
        best = model;
    }
    Ok(TrainOutcome {
        model: best,
        history,
        best_epoch,
    })
}

/// `epoch,train_loss,val_loss` rows; the validation cell is empty when absent.
pub fn write_history_csv(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut out = String::from("epoch,train_loss,val_loss\n");
    for r in history {
        let val = r.val_loss.map(|v| format!("{v:.10e}")).unwrap_or_default();
        out.push_str(&format!("{},{:.10e},{}\n", r.epoch, r.train_loss, val));
    }
    std::fs::File::create(path)
        .and_then(|mut f| f.write_all(out.as_bytes()))
        .map_err(|e| Error::io(path, e))
}
