//! Error metrics for RUL predictions.
//!
//! `Δ = pred − truth`; positive Δ is a late prediction.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SCORE_EARLY: f64 = 1.0 / 13.0;
pub const SCORE_LATE: f64 = 1.0 / 10.0;

fn deltas(pred: &[f64], truth: &[f64]) -> Result<Vec<f64>> {
    if pred.len() != truth.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} targets",
            pred.len(),
            truth.len()
        )));
    }
    if pred.is_empty() {
        return Err(Error::invalid("metrics need at least one prediction"));
    }
    Ok(pred.iter().zip(truth).map(|(p, t)| p - t).collect())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    let d = deltas(pred, truth)?;
    Ok(d.iter().map(|v| v.abs()).sum::<f64>() / d.len() as f64)
}

pub fn mse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    let d = deltas(pred, truth)?;
    Ok(d.iter().map(|v| v * v).sum::<f64>() / d.len() as f64)
}

/// `Σ exp(α|Δ|) − 1` with α = 1/13 for early and 1/10 for late predictions.
pub fn score(pred: &[f64], truth: &[f64]) -> Result<f64> {
    let d = deltas(pred, truth)?;
    Ok(d.iter()
        .map(|&v| {
            let a = if v < 0.0 { SCORE_EARLY } else { SCORE_LATE };
            (a * v.abs()).exp_m1()
        })
        .sum())
}

pub fn r2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    let d = deltas(pred, truth)?;
    if d.len() < 2 {
        return Err(Error::invalid("r2 needs at least two points"));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::invalid("r2 is undefined for constant targets"));
    }
    let ss_res: f64 = d.iter().map(|v| v * v).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub n: usize,
    pub mae: f64,
    pub mse: f64,
    pub score: f64,
    pub r2: f64,
}

impl MetricReport {
    pub const CSV_HEADER: &'static str = "n,mae,mse,score,score_e2,r2";

    pub fn compute(pred: &[f64], truth: &[f64]) -> Result<Self> {
        Ok(Self {
            n: pred.len(),
            mae: mae(pred, truth)?,
            mse: mse(pred, truth)?,
            score: score(pred, truth)?,
            r2: r2(pred, truth)?,
        })
    }

    /// Score in units of 10².
    pub fn score_e2(&self) -> f64 {
        self.score * 1e-2
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.n,
            self.mae,
            self.mse,
            self.score,
            self.score_e2(),
            self.r2
        )
    }
}
