//! C-MAPSS ingestion and the preprocessing pipeline: operating modes,
//! per-mode min-max scaling, sensor filtering, capped RUL labels, sliding
//! windows and engine-wise label dropping.

mod cmapss;
mod dataset;
mod modes;
mod normalize;
pub mod synthetic;
mod window;

pub use cmapss::{
    format_trajectories, load_subset, parse_cmapss, parse_rul, parse_trajectories, CmapssData, RawTrajectory,
    N_COLUMNS, N_SENSORS, N_SETTINGS,
};
pub use dataset::{hex_digest, preprocess, DataConfig, EngineSeries, ProcessedDataset};
pub use modes::{identify_modes, ModeTable, ModeTags};
pub use normalize::{filter_sensors, DropReason, NormalizationTable, Scaled, SensorMask};
pub use window::{
    assign_rul, drop_labels, holdout_engines, window_rows, window_spans, LabelMask, WindowSet, WindowSpan,
};
