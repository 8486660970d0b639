//! Seeded run-to-failure fleets in the C-MAPSS text layout, for tests and
//! dry runs when the real files are not at hand.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::cmapss::{format_trajectories, CmapssData, RawTrajectory, N_SENSORS};
use crate::error::{Error, Result};
use crate::ndcore::RngState;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub train_engines: usize,
    pub test_engines: usize,
    pub min_life: usize,
    pub max_life: usize,
    /// Number of distinct operating conditions.
    pub modes: usize,
    /// Measurement noise relative to each sensor's degradation amplitude.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            train_engines: 100,
            test_engines: 100,
            min_life: 128,
            max_life: 362,
            modes: 1,
            noise: 0.15,
            seed: 0,
        }
    }
}

const CONSTANT: [usize; 6] = [0, 4, 9, 15, 17, 18];
const BINARY: usize = 5;
const INTEGER: usize = 16;

struct Fleet {
    base: [f64; N_SENSORS],
    amp: [f64; N_SENSORS],
    curve: [f64; N_SENSORS],
    centers: Vec<[f64; 3]>,
}

impl Fleet {
    fn new(modes: usize, rng: &mut RngState) -> Self {
        let mut base = [0.0; N_SENSORS];
        let mut amp = [0.0; N_SENSORS];
        let mut curve = [0.0; N_SENSORS];
        for j in 0..N_SENSORS {
            base[j] = rng.uniform_range(10.0, 2500.0);
            let sign = if rng.uniform() < 0.5 { -1.0 } else { 1.0 };
            amp[j] = sign * base[j] * rng.uniform_range(0.002, 0.01);
            curve[j] = rng.uniform_range(2.0, 4.0);
        }
        let centers = (0..modes)
            .map(|m| {
                if m == 0 {
                    [0.0, 0.0, 100.0]
                } else {
                    [10.0 * m as f64, 0.2 * m as f64, 100.0 - 10.0 * m as f64]
                }
            })
            .collect();
        Self {
            base,
            amp,
            curve,
            centers,
        }
    }

    fn engine(&self, id: u32, life: usize, cycles: usize, noise: f64, rng: &mut RngState) -> RawTrajectory {
        let wear = rng.uniform_range(0.0, 0.15);
        let mut settings = Vec::with_capacity(cycles);
        let mut sensors = Vec::with_capacity(cycles);
        for c in 1..=cycles {
            let m = rng.below(self.centers.len());
            let c0 = self.centers[m];
            settings.push([
                round_to(c0[0] + rng.uniform_range(-0.002, 0.002), 4),
                round_to(c0[1] + rng.uniform_range(-0.0004, 0.0004), 4),
                c0[2],
            ]);
            let frac = c as f64 / life as f64;
            let mut x = [0.0; N_SENSORS];
            for j in 0..N_SENSORS {
                let base = self.base[j] * (1.0 + 0.05 * m as f64);
                let health = ((self.curve[j] * frac).exp() - 1.0) / (self.curve[j].exp() - 1.0);
                x[j] = if CONSTANT.contains(&j) {
                    round_to(base, 2)
                } else if j == BINARY {
                    if rng.uniform() < 0.97 {
                        21.61
                    } else {
                        21.6
                    }
                } else if j == INTEGER {
                    (392.0 + 6.0 * (health + wear) + rng.normal()).round()
                } else {
                    let d = health + wear;
                    round_to(base + self.amp[j] * (d + noise * rng.normal()), 4)
                };
            }
            sensors.push(x);
        }
        RawTrajectory {
            engine_id: id,
            settings,
            sensors,
        }
    }
}

fn round_to(v: f64, decimals: i32) -> f64 {
    let s = 10f64.powi(decimals);
    (v * s).round() / s
}

/// Engines degrade along per-sensor exponential curves plus noise; six
/// sensors are constant, one flips between two values and one is integer.
/// Test engines are cut at 30-90 % of their life.
pub fn generate(config: &SyntheticConfig) -> CmapssData {
    assert!(config.min_life >= 2 && config.max_life >= config.min_life);
    let mut rng = RngState::new(config.seed);
    let fleet = Fleet::new(config.modes.max(1), &mut rng);
    let life = |rng: &mut RngState| config.min_life + rng.below(config.max_life - config.min_life + 1);
    let train = (1..=config.train_engines)
        .map(|id| {
            let l = life(&mut rng);
            fleet.engine(id as u32, l, l, config.noise, &mut rng)
        })
        .collect();
    let mut test = Vec::new();
    let mut test_rul = Vec::new();
    for id in 1..=config.test_engines {
        let l = life(&mut rng);
        let cut = ((l as f64 * rng.uniform_range(0.3, 0.9)).round() as usize).clamp(1, l);
        test.push(fleet.engine(id as u32, l, cut, config.noise, &mut rng));
        test_rul.push((l - cut) as f64);
    }
    CmapssData { train, test, test_rul }
}

/// Writes `train_<subset>.txt`, `test_<subset>.txt` and `RUL_<subset>.txt`.
pub fn write_subset(dir: &Path, subset: &str, data: &CmapssData) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: String, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))
    };
    write(format!("train_{subset}.txt"), format_trajectories(&data.train))?;
    write(format!("test_{subset}.txt"), format_trajectories(&data.test))?;
    let rul: String = data.test_rul.iter().map(|r| format!("{r}\n")).collect();
    write(format!("RUL_{subset}.txt"), rul)
}
