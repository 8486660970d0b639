use tracing::{error, info, warn};

use super::config::{ExperimentConfig, Method};
use crate::data::{drop_labels, LabelMask, ProcessedDataset, WindowSet};
use crate::error::Result;
use crate::metrics::MetricReport;
use crate::ndcore::{derive_seed, RngState};
use crate::reliability::{
    ensemble_predict, self_learning, train_on_embedding, train_supervised, Ensemble, RulConfig, VaeEmbedding,
};
use crate::vae::{train_vae, VaeConfig, VaeModel};

const MASK_TAG: u64 = 1;
const VAE_TAG: u64 = 2;
const RUL_TAG: u64 = 3;

/// Seed of repetition `rep` at `fraction`, independent of the order of the
/// fraction list.
pub fn cell_seed(master: u64, fraction: f64, rep: usize) -> u64 {
    derive_seed(master, &[fraction.to_bits(), rep as u64])
}

pub fn mask_for(master: u64, fraction: f64, rep: usize, n_engines: usize) -> Result<LabelMask> {
    let mut rng = RngState::new(derive_seed(cell_seed(master, fraction, rep), &[MASK_TAG]));
    drop_labels(n_engines, fraction, &mut rng)
}

pub fn vae_config_for(cfg: &ExperimentConfig, fraction: f64, rep: usize) -> VaeConfig {
    let seed = if cfg.shared_vae {
        derive_seed(cfg.seed, &[VAE_TAG])
    } else {
        derive_seed(cell_seed(cfg.seed, fraction, rep), &[VAE_TAG])
    };
    let mut v = cfg.vae.clone();
    v.train.seed = seed;
    v
}

pub fn rul_config_for(cfg: &ExperimentConfig, fraction: f64, rep: usize) -> RulConfig {
    cfg.rul
        .with_seed(derive_seed(cell_seed(cfg.seed, fraction, rep), &[RUL_TAG]))
}

/// Outcome of one method on one label mask.
#[derive(Debug, Clone, PartialEq)]
pub struct CellRecord {
    pub fraction: f64,
    pub rep: usize,
    pub method: Method,
    pub labeled_engines: usize,
    pub result: std::result::Result<MetricReport, String>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stat {
    pub mean: f64,
    /// Sample standard deviation over √reps; 0 for a single repetition.
    pub sem: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        let n = values.len();
        if n == 0 {
            return None;
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let sem = if n < 2 {
            0.0
        } else {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        };
        Some(Stat { mean, sem })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MetricKind {
    Mae,
    Mse,
    Score,
    ScoreE2,
    R2,
}

impl MetricKind {
    pub const ALL: [MetricKind; 5] = [
        MetricKind::Mae,
        MetricKind::Mse,
        MetricKind::Score,
        MetricKind::ScoreE2,
        MetricKind::R2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Mae => "mae",
            MetricKind::Mse => "mse",
            MetricKind::Score => "score",
            MetricKind::ScoreE2 => "score_e2",
            MetricKind::R2 => "r2",
        }
    }

    pub fn of(self, r: &MetricReport) -> f64 {
        match self {
            MetricKind::Mae => r.mae,
            MetricKind::Mse => r.mse,
            MetricKind::Score => r.score,
            MetricKind::ScoreE2 => r.score_e2(),
            MetricKind::R2 => r.r2,
        }
    }
}

/// Aggregate of one method at one fraction.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub method: Method,
    pub fraction: f64,
    /// Repetitions that produced metrics.
    pub reps: usize,
    pub failed: usize,
    /// Indexed like [`MetricKind::ALL`]; `None` when every repetition failed.
    pub stats: Option<[Stat; 5]>,
}

impl ReportRow {
    pub fn stat(&self, kind: MetricKind) -> Option<Stat> {
        let i = MetricKind::ALL.iter().position(|k| *k == kind).expect("known metric");
        self.stats.map(|s| s[i])
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentReport {
    pub cells: Vec<CellRecord>,
    pub rows: Vec<ReportRow>,
    /// Unweighted validation loss of each VAE trained, by (fraction, rep).
    pub vae_losses: Vec<(f64, usize, f64)>,
}

impl ExperimentReport {
    pub fn row(&self, method: Method, fraction: f64) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.method == method && r.fraction == fraction)
    }

    pub(crate) fn aggregate(&mut self, fractions: &[f64], methods: &[Method]) {
        self.rows.clear();
        for &f in fractions {
            for &m in methods {
                let reports: Vec<&MetricReport> = self
                    .cells
                    .iter()
                    .filter(|c| c.fraction == f && c.method == m)
                    .filter_map(|c| c.result.as_ref().ok())
                    .collect();
                let failed = self
                    .cells
                    .iter()
                    .filter(|c| c.fraction == f && c.method == m && c.result.is_err())
                    .count();
                let stats = if reports.is_empty() {
                    None
                } else {
                    Some(MetricKind::ALL.map(|k| {
                        let v: Vec<f64> = reports.iter().map(|r| k.of(r)).collect();
                        Stat::of(&v).expect("non-empty")
                    }))
                };
                self.rows.push(ReportRow {
                    method: m,
                    fraction: f,
                    reps: reports.len(),
                    failed,
                    stats,
                });
            }
        }
    }
}

fn evaluate(ensemble: &Ensemble, test: &WindowSet) -> Result<MetricReport> {
    let pred = ensemble_predict(ensemble, test)?;
    MetricReport::compute(&pred, test.labels()?)
}

fn run_method(
    method: Method,
    cfg: &ExperimentConfig,
    rul: &RulConfig,
    dl: &WindowSet,
    du: &WindowSet,
    test: &WindowSet,
    vae: Option<&VaeModel>,
) -> Result<MetricReport> {
    match method {
        Method::Sl => {
            let e = Ensemble::train(cfg.ensemble, rul, |c| Ok(train_supervised(dl, c)?.model))?;
            evaluate(&e, test)
        }
        Method::SelfSsl => {
            let e = Ensemble::train(cfg.ensemble, rul, |c| Ok(self_learning(dl, du, c)?.model.model))?;
            evaluate(&e, test)
        }
        Method::VaeSsl => {
            let vae = vae.expect("VAE trained before VAE-SSL");
            let emb = VaeEmbedding {
                model: vae,
                k: cfg.vae.k,
            };
            let e = Ensemble::train(cfg.ensemble, rul, |c| Ok(train_on_embedding(&emb, dl, c)?.model))?;
            evaluate(&e, &vae.embed_set(test, cfg.vae.k)?)
        }
    }
}

/// Runs every (fraction, repetition, method) cell. Failed cells are logged
/// and reported as missing.
pub fn run_experiment(cfg: &ExperimentConfig, ds: &ProcessedDataset) -> Result<ExperimentReport> {
    cfg.validate()?;
    let mut fractions: Vec<f64> = Vec::new();
    for &f in &cfg.fractions {
        if !fractions.contains(&f) {
            fractions.push(f);
        }
    }
    let mut methods = cfg.methods.clone();
    methods.sort();
    methods.dedup();

    let test = ds.test_windows();
    let all_x = ds.train_windows(|_| true, false);
    let needs_vae = methods.contains(&Method::VaeSsl);
    let mut report = ExperimentReport::default();
    let mut shared: Option<std::result::Result<VaeModel, String>> = None;

    for &f in &fractions {
        for rep in 0..cfg.reps_for(f) {
            let mask = match mask_for(cfg.seed, f, rep, ds.train.len()) {
                Ok(m) => m,
                Err(e) => {
                    error!(fraction = f, rep, %e, "label mask failed");
                    for &m in &methods {
                        report.cells.push(CellRecord {
                            fraction: f,
                            rep,
                            method: m,
                            labeled_engines: 0,
                            result: Err(e.to_string()),
                        });
                    }
                    continue;
                }
            };
            let (dl, du) = ds.split(&mask)?;
            info!(
                fraction = f,
                rep,
                labeled = mask.n_labeled(),
                windows = dl.len(),
                "cell"
            );

            let vae: Option<std::result::Result<VaeModel, String>> = if !needs_vae {
                None
            } else if cfg.shared_vae && shared.is_some() {
                shared.clone()
            } else {
                let vcfg = vae_config_for(cfg, f, rep);
                let trained = train_vae(&all_x, &vcfg).map(|o| {
                    let best = o.history.iter().find(|h| h.epoch == o.best_epoch);
                    if let Some(v) = best.and_then(|h| h.val_loss) {
                        report.vae_losses.push((f, rep, v));
                    }
                    o.model
                });
                let trained = trained.map_err(|e| {
                    error!(fraction = f, rep, %e, "VAE training failed");
                    e.to_string()
                });
                if cfg.shared_vae {
                    shared = Some(trained.clone());
                }
                Some(trained)
            };

            let rul = rul_config_for(cfg, f, rep);
            for &m in &methods {
                let result = match (m, &vae) {
                    (Method::VaeSsl, Some(Err(e))) => Err(format!("VAE unavailable: {e}")),
                    _ => run_method(
                        m,
                        cfg,
                        &rul,
                        &dl,
                        &du,
                        &test,
                        vae.as_ref().and_then(|v| v.as_ref().ok()),
                    )
                    .map_err(|e| e.to_string()),
                };
                match &result {
                    Ok(r) => info!(fraction = f, rep, method = %m, mae = r.mae, mse = r.mse, "done"),
                    Err(e) => warn!(fraction = f, rep, method = %m, error = %e, "cell failed"),
                }
                report.cells.push(CellRecord {
                    fraction: f,
                    rep,
                    method: m,
                    labeled_engines: mask.n_labeled(),
                    result,
                });
            }
        }
    }
    report.aggregate(&fractions, &methods);
    Ok(report)
}
