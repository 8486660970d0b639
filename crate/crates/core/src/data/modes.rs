use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use tracing::warn;

use super::cmapss::{RawTrajectory, N_SETTINGS};

/// Operating modes keyed by settings rounded to `precision` decimals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeTable {
    pub precision: u32,
    /// Rounded settings per mode, ordered by mode id.
    pub centers: Vec<[f64; N_SETTINGS]>,
    /// Cycle count per mode in the fitted data.
    pub counts: Vec<usize>,
}

/// Per-cycle mode ids, one vector per trajectory.
pub type ModeTags = Vec<Vec<usize>>;

fn key(settings: &[f64; N_SETTINGS], precision: u32) -> [i64; N_SETTINGS] {
    let scale = 10f64.powi(precision as i32);
    // integer keys make -0.0 and 0.0 the same mode
    settings.map(|v| (v * scale).round() as i64)
}

/// Unique rounded setting tuples, with ids assigned in sorted key order.
pub fn identify_modes(trajectories: &[RawTrajectory], precision: u32) -> (ModeTable, ModeTags) {
    let mut counts: BTreeMap<[i64; N_SETTINGS], usize> = BTreeMap::new();
    for t in trajectories {
        for s in &t.settings {
            *counts.entry(key(s, precision)).or_default() += 1;
        }
    }
    let scale = 10f64.powi(precision as i32);
    let ids: BTreeMap<[i64; N_SETTINGS], usize> = counts.keys().enumerate().map(|(i, k)| (*k, i)).collect();
    let table = ModeTable {
        precision,
        centers: counts.keys().map(|k| k.map(|v| v as f64 / scale)).collect(),
        counts: counts.values().copied().collect(),
    };
    let tags = trajectories
        .iter()
        .map(|t| t.settings.iter().map(|s| ids[&key(s, precision)]).collect())
        .collect();
    (table, tags)
}

impl ModeTable {
    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    /// Mode of one cycle and whether it matched exactly. Unseen settings fall
    /// back to the nearest center in Euclidean distance.
    pub fn lookup(&self, settings: &[f64; N_SETTINGS]) -> (usize, bool) {
        let k = key(settings, self.precision);
        let scale = 10f64.powi(self.precision as i32);
        if let Some(i) = self
            .centers
            .iter()
            .position(|c| c.map(|v| (v * scale).round() as i64) == k)
        {
            return (i, true);
        }
        let dist = |c: &[f64; N_SETTINGS]| -> f64 { c.iter().zip(settings).map(|(a, b)| (a - b).powi(2)).sum() };
        let nearest = self
            .centers
            .iter()
            .enumerate()
            .min_by(|a, b| dist(a.1).total_cmp(&dist(b.1)))
            .map(|(i, _)| i)
            .expect("mode table is never empty after fitting");
        (nearest, false)
    }

    /// Tags every cycle of `trajectories`, logging how many needed the
    /// nearest-mode fallback.
    pub fn tag(&self, trajectories: &[RawTrajectory]) -> ModeTags {
        let mut unseen = 0usize;
        let tags = trajectories
            .iter()
            .map(|t| {
                t.settings
                    .iter()
                    .map(|s| {
                        let (m, exact) = self.lookup(s);
                        unseen += usize::from(!exact);
                        m
                    })
                    .collect()
            })
            .collect();
        if unseen > 0 {
            warn!(
                unseen,
                "cycles with unseen operating settings mapped to the nearest mode"
            );
        }
        tags
    }
}
