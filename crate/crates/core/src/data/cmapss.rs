use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};

pub const N_SETTINGS: usize = 3;
pub const N_SENSORS: usize = 21;
pub const N_COLUMNS: usize = 2 + N_SETTINGS + N_SENSORS;

/// One engine's per-cycle records, cycles numbered `1..=len`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTrajectory {
    pub engine_id: u32,
    pub settings: Vec<[f64; N_SETTINGS]>,
    pub sensors: Vec<[f64; N_SENSORS]>,
}

impl RawTrajectory {
    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }
}

/// Parsed train/test split of one C-MAPSS subset.
#[derive(Debug, Clone, PartialEq)]
pub struct CmapssData {
    pub train: Vec<RawTrajectory>,
    pub test: Vec<RawTrajectory>,
    /// True RUL at the truncation point, parallel to `test`.
    pub test_rul: Vec<f64>,
}

impl CmapssData {
    pub fn train_cycles(&self) -> usize {
        self.train.iter().map(RawTrajectory::len).sum()
    }

    pub fn test_cycles(&self) -> usize {
        self.test.iter().map(RawTrajectory::len).sum()
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Parses the three files of a subset (`train_FDxxx.txt`, `test_FDxxx.txt`,
/// `RUL_FDxxx.txt`).
pub fn parse_cmapss(train_file: &Path, test_file: &Path, rul_file: &Path) -> Result<CmapssData> {
    let train = parse_trajectories(&read(train_file)?, &train_file.display().to_string())?;
    let test = parse_trajectories(&read(test_file)?, &test_file.display().to_string())?;
    let rul = parse_rul(&read(rul_file)?, &rul_file.display().to_string())?;
    align(train, test, rul, &rul_file.display().to_string())
}

/// Reads `train_<subset>.txt`, `test_<subset>.txt` and `RUL_<subset>.txt` from `dir`.
pub fn load_subset(dir: &Path, subset: &str) -> Result<CmapssData> {
    parse_cmapss(
        &dir.join(format!("train_{subset}.txt")),
        &dir.join(format!("test_{subset}.txt")),
        &dir.join(format!("RUL_{subset}.txt")),
    )
}

pub(crate) fn align(
    train: Vec<RawTrajectory>,
    test: Vec<RawTrajectory>,
    rul: Vec<f64>,
    rul_label: &str,
) -> Result<CmapssData> {
    if rul.len() < test.len() {
        return Err(Error::Parse {
            path: rul_label.to_string(),
            line: rul.len() + 1,
            msg: format!(
                "missing RUL row: {} test engines but {} RUL rows",
                test.len(),
                rul.len()
            ),
        });
    }
    if rul.len() > test.len() {
        return Err(Error::Parse {
            path: rul_label.to_string(),
            line: test.len() + 1,
            msg: format!("{} RUL rows for only {} test engines", rul.len(), test.len()),
        });
    }
    Ok(CmapssData {
        train,
        test,
        test_rul: rul,
    })
}

/// Parses whitespace-separated rows of 26 numbers into trajectories sorted
/// by engine id.
pub fn parse_trajectories(text: &str, label: &str) -> Result<Vec<RawTrajectory>> {
    let err = |line: usize, msg: String| Error::Parse {
        path: label.to_string(),
        line,
        msg,
    };
    let mut engines: BTreeMap<u32, RawTrajectory> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = raw.split_whitespace().collect();
        if fields.len() != N_COLUMNS {
            return Err(err(
                line_no,
                format!("expected {N_COLUMNS} columns, found {}", fields.len()),
            ));
        }
        let mut values = [0.0; N_COLUMNS];
        for (v, f) in values.iter_mut().zip(&fields) {
            *v = f
                .parse::<f64>()
                .map_err(|_| err(line_no, format!("not a number: {f:?}")))?;
            if !v.is_finite() {
                return Err(err(line_no, format!("non-finite value {f:?}")));
            }
        }
        let id = as_index(values[0]).ok_or_else(|| err(line_no, "bad engine id".into()))?;
        let cycle = as_index(values[1]).ok_or_else(|| err(line_no, "bad cycle number".into()))?;
        let traj = engines.entry(id).or_insert_with(|| RawTrajectory {
            engine_id: id,
            settings: Vec::new(),
            sensors: Vec::new(),
        });
        let expected = traj.len() as u32 + 1;
        if cycle != expected {
            return Err(err(
                line_no,
                format!("engine {id}: cycle {cycle} follows cycle {}", expected - 1),
            ));
        }
        let mut settings = [0.0; N_SETTINGS];
        settings.copy_from_slice(&values[2..2 + N_SETTINGS]);
        let mut sensors = [0.0; N_SENSORS];
        sensors.copy_from_slice(&values[2 + N_SETTINGS..]);
        traj.settings.push(settings);
        traj.sensors.push(sensors);
    }
    Ok(engines.into_values().collect())
}

fn as_index(v: f64) -> Option<u32> {
    (v.fract() == 0.0 && v >= 1.0 && v <= u32::MAX as f64).then_some(v as u32)
}

/// One non-negative number per non-empty line.
pub fn parse_rul(text: &str, label: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let t = raw.trim();
        if t.is_empty() {
            continue;
        }
        let v: f64 = t.parse().map_err(|_| Error::Parse {
            path: label.to_string(),
            line: i + 1,
            msg: format!("not a RUL value: {t:?}"),
        })?;
        if !(v >= 0.0) || !v.is_finite() {
            return Err(Error::Parse {
                path: label.to_string(),
                line: i + 1,
                msg: format!("RUL must be a finite non-negative number, got {t:?}"),
            });
        }
        out.push(v);
    }
    Ok(out)
}

/// Writes trajectories in the whitespace-separated 26-column layout.
pub fn format_trajectories(trajs: &[RawTrajectory]) -> String {
    let mut out = String::new();
    for t in trajs {
        for (c, (s, x)) in t.settings.iter().zip(&t.sensors).enumerate() {
            out.push_str(&format!("{} {}", t.engine_id, c + 1));
            for v in s.iter().chain(x.iter()) {
                out.push_str(&format!(" {v}"));
            }
            out.push('\n');
        }
    }
    out
}
