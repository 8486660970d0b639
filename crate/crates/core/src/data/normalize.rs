use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::cmapss::{RawTrajectory, N_SENSORS};
use super::modes::ModeTags;
use crate::error::{Error, Result};

/// Per-mode, per-sensor min/max over the fitted trajectories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationTable {
    pub min: Vec<[f64; N_SENSORS]>,
    pub max: Vec<[f64; N_SENSORS]>,
}

/// Sensor readings scaled per mode, one row per cycle.
pub type Scaled = Vec<Vec<[f64; N_SENSORS]>>;

impl NormalizationTable {
    pub fn fit(trajectories: &[RawTrajectory], tags: &ModeTags, n_modes: usize) -> Self {
        let mut min = vec![[f64::INFINITY; N_SENSORS]; n_modes];
        let mut max = vec![[f64::NEG_INFINITY; N_SENSORS]; n_modes];
        for (t, modes) in trajectories.iter().zip(tags) {
            for (x, &m) in t.sensors.iter().zip(modes) {
                for j in 0..N_SENSORS {
                    min[m][j] = min[m][j].min(x[j]);
                    max[m][j] = max[m][j].max(x[j]);
                }
            }
        }
        // modes without cycles keep an inert range
        for m in 0..n_modes {
            for j in 0..N_SENSORS {
                if min[m][j] > max[m][j] {
                    min[m][j] = 0.0;
                    max[m][j] = 0.0;
                }
            }
        }
        Self { min, max }
    }

    pub fn n_modes(&self) -> usize {
        self.min.len()
    }

    pub fn is_constant(&self, mode: usize, sensor: usize) -> bool {
        !(self.max[mode][sensor] > self.min[mode][sensor])
    }

    pub fn scale(&self, mode: usize, sensor: usize, v: f64) -> f64 {
        if self.is_constant(mode, sensor) {
            0.0
        } else {
            let lo = self.min[mode][sensor];
            (v - lo) / (self.max[mode][sensor] - lo)
        }
    }

    /// Inverse of [`scale`](Self::scale); constant entries return their value.
    pub fn unscale(&self, mode: usize, sensor: usize, v: f64) -> f64 {
        let lo = self.min[mode][sensor];
        lo + v * (self.max[mode][sensor] - lo)
    }

    /// Scales every reading; values outside the fitted range are not clipped.
    pub fn apply(&self, trajectories: &[RawTrajectory], tags: &ModeTags) -> Scaled {
        trajectories
            .iter()
            .zip(tags)
            .map(|(t, modes)| {
                t.sensors
                    .iter()
                    .zip(modes)
                    .map(|(x, &m)| std::array::from_fn(|j| self.scale(m, j, x[j])))
                    .collect()
            })
            .collect()
    }

    pub fn invert(&self, scaled: &Scaled, tags: &ModeTags) -> Scaled {
        scaled
            .iter()
            .zip(tags)
            .map(|(rows, modes)| {
                rows.iter()
                    .zip(modes)
                    .map(|(x, &m)| std::array::from_fn(|j| self.unscale(m, j, x[j])))
                    .collect()
            })
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend((self.n_modes() as u64).to_le_bytes());
        for (lo, hi) in self.min.iter().zip(&self.max) {
            for v in lo.iter().chain(hi.iter()) {
                out.extend(v.to_le_bytes());
            }
        }
        out
    }
}

/// Why a sensor was left out of the model inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Constant,
    Discrete,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensorMask {
    /// `None` for retained sensors.
    pub dropped: Vec<Option<DropReason>>,
}

impl SensorMask {
    pub fn all() -> Self {
        Self {
            dropped: vec![None; N_SENSORS],
        }
    }

    /// Zero-based indices of retained sensors.
    pub fn retained(&self) -> Vec<usize> {
        (0..self.dropped.len()).filter(|&j| self.dropped[j].is_none()).collect()
    }

    pub fn width(&self) -> usize {
        self.dropped.iter().filter(|d| d.is_none()).count()
    }

    /// Sensor names (`s1`..`s21`) that survive.
    pub fn retained_names(&self) -> Vec<String> {
        self.retained().iter().map(|j| format!("s{}", j + 1)).collect()
    }
}

/// Drops sensors with zero variance after scaling, then sensors with fewer
/// than `threshold` distinct raw values.
pub fn filter_sensors(raw: &[RawTrajectory], scaled: &Scaled, threshold: usize) -> Result<SensorMask> {
    let mut dropped = vec![None; N_SENSORS];
    for (j, slot) in dropped.iter_mut().enumerate() {
        let values = scaled.iter().flatten().map(|x| x[j]);
        let (mut n, mut mean, mut m2) = (0.0, 0.0, 0.0);
        for v in values {
            n += 1.0;
            let d = v - mean;
            mean += d / n;
            m2 += d * (v - mean);
        }
        if n == 0.0 || m2 <= 0.0 {
            *slot = Some(DropReason::Constant);
            continue;
        }
        let unique: BTreeSet<u64> = raw
            .iter()
            .flat_map(|t| t.sensors.iter().map(move |x| (x[j] + 0.0).to_bits()))
            .collect();
        if unique.len() < threshold {
            *slot = Some(DropReason::Discrete);
        }
    }
    let mask = SensorMask { dropped };
    if mask.width() == 0 {
        return Err(Error::Data("every sensor was dropped by the filter".into()));
    }
    Ok(mask)
}
