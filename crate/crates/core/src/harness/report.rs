use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use tracing::warn;

use super::config::ExperimentConfig;
use super::experiment::{cell_seed, ExperimentReport, MetricKind, ReportRow};
use crate::error::{Error, Result};

/// Metric blocks of the summary table.
pub const TABLE_METRICS: [MetricKind; 4] = [MetricKind::Mae, MetricKind::Mse, MetricKind::ScoreE2, MetricKind::R2];

/// Fractions computed but left out of the summary table.
pub const TABLE_SKIPPED: [f64; 2] = [0.8, 0.5];

fn num(v: f64) -> String {
    format!("{v}")
}

fn fraction_label(f: f64) -> String {
    format!("{f}")
}

fn table_fractions(report: &ExperimentReport) -> Vec<f64> {
    let mut fs: Vec<f64> = Vec::new();
    for r in &report.rows {
        if !fs.contains(&r.fraction) && !TABLE_SKIPPED.contains(&r.fraction) {
            fs.push(r.fraction);
        }
    }
    fs.sort_by(|a, b| b.total_cmp(a));
    fs
}

/// One row per (metric, method) with mean and sem columns per fraction.
/// Missing aggregates are empty fields.
pub fn table_csv(report: &ExperimentReport) -> String {
    let fractions = table_fractions(report);
    let mut s = String::from("metric,method");
    for f in &fractions {
        let l = fraction_label(*f);
        let _ = write!(s, ",f{l}_mean,f{l}_sem");
    }
    s.push('\n');
    let mut methods: Vec<_> = report.rows.iter().map(|r| r.method).collect();
    methods.sort();
    methods.dedup();
    for kind in TABLE_METRICS {
        for m in &methods {
            let _ = write!(s, "{},{}", kind.name(), m);
            for f in &fractions {
                match report.row(*m, *f).and_then(|r| r.stat(kind)) {
                    Some(st) => {
                        let _ = write!(s, ",{},{}", num(st.mean), num(st.sem));
                    }
                    None => s.push_str(",,"),
                }
            }
            s.push('\n');
        }
    }
    s
}

/// Long format for plotting one metric against the label fraction.
pub fn plot_csv(report: &ExperimentReport, kind: MetricKind) -> String {
    let mut s = String::from("fraction,method,mean,sem,reps\n");
    let mut rows: Vec<&ReportRow> = report.rows.iter().collect();
    rows.sort_by(|a, b| b.fraction.total_cmp(&a.fraction).then(a.method.cmp(&b.method)));
    for r in rows {
        match r.stat(kind) {
            Some(st) => {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{}",
                    r.fraction,
                    r.method,
                    num(st.mean),
                    num(st.sem),
                    r.reps
                );
            }
            None => {
                let _ = writeln!(s, "{},{},,,0", r.fraction, r.method);
            }
        }
    }
    s
}

pub fn cells_csv(report: &ExperimentReport) -> String {
    let mut s = String::from("fraction,rep,method,labeled_engines,n,mae,mse,score,score_e2,r2,error\n");
    for c in &report.cells {
        let _ = write!(s, "{},{},{},{},", c.fraction, c.rep, c.method, c.labeled_engines);
        match &c.result {
            Ok(r) => {
                let _ = writeln!(
                    s,
                    "{},{},{},{},{},{},",
                    r.n,
                    num(r.mae),
                    num(r.mse),
                    num(r.score),
                    num(r.score_e2()),
                    num(r.r2)
                );
            }
            Err(e) => {
                let _ = writeln!(s, ",,,,,,\"{}\"", e.replace('"', "'"));
            }
        }
    }
    s
}

#[derive(Debug, Serialize)]
struct MissingCell {
    fraction: f64,
    rep: usize,
    method: String,
    error: String,
}

#[derive(Debug, Serialize)]
struct CellSeed {
    fraction: f64,
    rep: usize,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct VaeLoss {
    fraction: f64,
    rep: usize,
    val_loss: f64,
}

#[derive(Debug, Serialize)]
struct Metadata<'a> {
    version: &'static str,
    dataset_hash: &'a str,
    config: &'a ExperimentConfig,
    cell_seeds: Vec<CellSeed>,
    single_repetition: Vec<f64>,
    vae_val_loss: Vec<VaeLoss>,
    missing: Vec<MissingCell>,
}

pub fn metadata_json(report: &ExperimentReport, cfg: &ExperimentConfig, dataset_hash: &str) -> Result<String> {
    let mut cell_seeds = Vec::new();
    let mut seen = Vec::new();
    for c in &report.cells {
        if !seen.contains(&(c.fraction.to_bits(), c.rep)) {
            seen.push((c.fraction.to_bits(), c.rep));
            cell_seeds.push(CellSeed {
                fraction: c.fraction,
                rep: c.rep,
                seed: cell_seed(cfg.seed, c.fraction, c.rep),
            });
        }
    }
    let mut single: Vec<f64> = report.rows.iter().filter(|r| r.reps == 1).map(|r| r.fraction).collect();
    single.dedup();
    let meta = Metadata {
        version: env!("CARGO_PKG_VERSION"),
        dataset_hash,
        config: cfg,
        cell_seeds,
        single_repetition: single,
        vae_val_loss: report
            .vae_losses
            .iter()
            .map(|&(fraction, rep, val_loss)| VaeLoss {
                fraction,
                rep,
                val_loss,
            })
            .collect(),
        missing: report
            .cells
            .iter()
            .filter_map(|c| {
                c.result.as_ref().err().map(|e| MissingCell {
                    fraction: c.fraction,
                    rep: c.rep,
                    method: c.method.to_string(),
                    error: e.clone(),
                })
            })
            .collect(),
    };
    serde_json::to_string_pretty(&meta).map_err(|e| Error::Config(e.to_string()))
}

/// Writes the summary table, one plot file per metric, the per-cell dump
/// and the run metadata into `dir`. Returns the paths written.
pub fn emit_report(
    report: &ExperimentReport,
    cfg: &ExperimentConfig,
    dataset_hash: &str,
    dir: &Path,
) -> Result<Vec<PathBuf>> {
    if report.cells.is_empty() {
        warn!("empty experiment report; writing headers only");
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = vec![
        ("table.csv".to_string(), table_csv(report)),
        ("cells.csv".to_string(), cells_csv(report)),
    ];
    for kind in MetricKind::ALL {
        files.push((format!("plot_{}.csv", kind.name()), plot_csv(report, kind)));
    }
    files.push(("metadata.json".to_string(), metadata_json(report, cfg, dataset_hash)?));
    let mut written = Vec::new();
    for (name, body) in files {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}
