//! Experiment orchestration: config files, the fraction x repetition x
//! method grid, report files and the command-line front end.

pub mod cli;
mod config;
mod experiment;
mod report;

pub use config::{ExperimentConfig, Method};
pub use experiment::{
    cell_seed, mask_for, rul_config_for, run_experiment, vae_config_for, CellRecord, ExperimentReport, MetricKind,
    ReportRow, Stat,
};
pub use report::{cells_csv, emit_report, metadata_json, plot_csv, table_csv, TABLE_METRICS, TABLE_SKIPPED};
