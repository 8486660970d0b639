use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::cmapss::{CmapssData, N_SENSORS};
use super::modes::{identify_modes, ModeTable};
use super::normalize::{filter_sensors, NormalizationTable, Scaled, SensorMask};
use super::window::{assign_rul, window_rows, window_spans, LabelMask, WindowSet, WindowSpan};
use crate::error::{Error, Result};
use crate::ndcore::read_u64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    /// Window length `T` in cycles.
    pub window: usize,
    pub stride: usize,
    pub max_rul: f64,
    /// Sensors with fewer distinct raw values are treated as discrete.
    pub discrete_threshold: usize,
    /// Decimals kept when rounding operating settings into modes.
    pub mode_precision: u32,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            window: 30,
            stride: 1,
            max_rul: 140.0,
            discrete_threshold: 20,
            mode_precision: 1,
        }
    }
}

impl DataConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window == 0 || self.stride == 0 {
            return Err(Error::Config("window and stride must be >= 1".into()));
        }
        if !(self.max_rul > 0.0) {
            return Err(Error::Config("max_rul must be positive".into()));
        }
        Ok(())
    }
}

/// Normalized, sensor-filtered cycles of one engine.
#[derive(Debug, Clone, PartialEq)]
pub struct EngineSeries {
    pub engine_id: u32,
    /// `len × width`, row per cycle.
    pub features: Vec<f64>,
    /// Capped per-cycle RUL for run-to-failure engines.
    pub labels: Option<Vec<f64>>,
}

impl EngineSeries {
    pub fn len(&self, width: usize) -> usize {
        self.features.len() / width
    }

    fn rows(&self, width: usize) -> Vec<&[f64]> {
        self.features.chunks(width).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProcessedDataset {
    pub config: DataConfig,
    pub modes: ModeTable,
    pub norm: NormalizationTable,
    pub mask: SensorMask,
    pub train: Vec<EngineSeries>,
    pub test: Vec<EngineSeries>,
    /// True RUL at the end of each truncated test trajectory.
    pub test_rul: Vec<f64>,
}

fn select_sensors(scaled: &Scaled, keep: &[usize]) -> Vec<Vec<f64>> {
    scaled
        .iter()
        .map(|rows| rows.iter().flat_map(|x| keep.iter().map(move |&j| x[j])).collect())
        .collect()
}

/// Modes, per-mode scaling and sensor filtering fitted on the training
/// split and applied to both splits; training cycles get capped RUL labels.
pub fn preprocess(raw: &CmapssData, config: &DataConfig) -> Result<ProcessedDataset> {
    config.validate()?;
    if raw.train.is_empty() {
        return Err(Error::Data("no training engines".into()));
    }
    let (modes, train_tags) = identify_modes(&raw.train, config.mode_precision);
    let norm = NormalizationTable::fit(&raw.train, &train_tags, modes.len());
    let train_scaled = norm.apply(&raw.train, &train_tags);
    let mask = filter_sensors(&raw.train, &train_scaled, config.discrete_threshold)?;
    let keep = mask.retained();

    let test_tags = modes.tag(&raw.test);
    let test_scaled = norm.apply(&raw.test, &test_tags);

    let train = raw
        .train
        .iter()
        .zip(select_sensors(&train_scaled, &keep))
        .map(|(t, features)| EngineSeries {
            engine_id: t.engine_id,
            features,
            labels: Some(assign_rul(t.len(), config.max_rul)),
        })
        .collect();
    let test = raw
        .test
        .iter()
        .zip(select_sensors(&test_scaled, &keep))
        .map(|(t, features)| EngineSeries {
            engine_id: t.engine_id,
            features,
            labels: None,
        })
        .collect();
    Ok(ProcessedDataset {
        config: config.clone(),
        modes,
        norm,
        mask,
        train,
        test,
        test_rul: raw.test_rul.clone(),
    })
}

const MAGIC: &[u8; 8] = b"VSSLDS01";

#[derive(Serialize, Deserialize)]
struct BundleHeader {
    config: DataConfig,
    modes: ModeTable,
    norm: NormalizationTable,
    mask: SensorMask,
    train: Vec<(u32, usize)>,
    test: Vec<(u32, usize)>,
    test_rul: Vec<f64>,
}

impl ProcessedDataset {
    pub fn width(&self) -> usize {
        self.mask.width()
    }

    pub fn train_cycles(&self) -> usize {
        self.train.iter().map(|e| e.len(self.width())).sum()
    }

    pub fn test_cycles(&self) -> usize {
        self.test.iter().map(|e| e.len(self.width())).sum()
    }

    pub fn train_ids(&self) -> Vec<u32> {
        self.train.iter().map(|e| e.engine_id).collect()
    }

    fn push_windows(&self, set: &mut WindowSet, e: &EngineSeries, spans: &[WindowSpan], labeled: bool) {
        let w = self.width();
        let rows = e.rows(w);
        let t = self.config.window;
        for &span in spans {
            let label = if labeled {
                e.labels.as_ref().map(|l| l[span.end - 1])
            } else {
                None
            };
            set.push(e.engine_id, window_rows(&rows, span, t), label);
        }
    }

    /// Sliding windows over the training engines picked by `include`
    /// (indexed like `self.train`), with labels when `labeled`.
    pub fn train_windows(&self, include: impl Fn(usize) -> bool, labeled: bool) -> WindowSet {
        let mut set = WindowSet::empty(self.config.window, self.width(), labeled);
        for (i, e) in self.train.iter().enumerate() {
            if include(i) {
                let spans = window_spans(e.len(self.width()), self.config.window, self.config.stride);
                self.push_windows(&mut set, e, &spans, labeled);
            }
        }
        set
    }

    /// `(D_L, D_U)`: labeled windows of masked-in engines and label-free
    /// windows of the rest.
    pub fn split(&self, mask: &LabelMask) -> Result<(WindowSet, WindowSet)> {
        if mask.labeled.len() != self.train.len() {
            return Err(Error::invalid(format!(
                "label mask covers {} engines, dataset has {}",
                mask.labeled.len(),
                self.train.len()
            )));
        }
        Ok((
            self.train_windows(|i| mask.labeled[i], true),
            self.train_windows(|i| !mask.labeled[i], false),
        ))
    }

    /// One window per test engine over its last `T` cycles, labeled with
    /// the true RUL at truncation.
    pub fn test_windows(&self) -> WindowSet {
        let mut set = WindowSet::empty(self.config.window, self.width(), true);
        let w = self.width();
        let t = self.config.window;
        for (e, &rul) in self.test.iter().zip(&self.test_rul) {
            let len = e.len(w);
            let span = WindowSpan {
                end: len,
                padding: t.saturating_sub(len),
            };
            set.push(e.engine_id, window_rows(&e.rows(w), span, t), Some(rul));
        }
        set
    }

    pub fn write_to(&self, out: &mut impl Write) -> Result<()> {
        let w = self.width();
        let header = BundleHeader {
            config: self.config.clone(),
            modes: self.modes.clone(),
            norm: self.norm.clone(),
            mask: self.mask.clone(),
            train: self.train.iter().map(|e| (e.engine_id, e.len(w))).collect(),
            test: self.test.iter().map(|e| (e.engine_id, e.len(w))).collect(),
            test_rul: self.test_rul.clone(),
        };
        let json = serde_json::to_vec(&header).map_err(|e| Error::Data(e.to_string()))?;
        let io = |e| Error::io("<bundle>", e);
        out.write_all(MAGIC).map_err(io)?;
        out.write_all(&(json.len() as u64).to_le_bytes()).map_err(io)?;
        out.write_all(&json).map_err(io)?;
        let mut put = |values: &[f64]| -> Result<()> {
            for v in values {
                out.write_all(&v.to_le_bytes()).map_err(io)?;
            }
            Ok(())
        };
        for e in &self.train {
            put(&e.features)?;
            put(e.labels.as_deref().unwrap_or(&[]))?;
        }
        for e in &self.test {
            put(&e.features)?;
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory");
        buf
    }

    pub fn read_from(input: &mut impl Read) -> Result<ProcessedDataset> {
        let bad = |msg: String| Error::Data(format!("dataset bundle: {msg}"));
        let io = |e: std::io::Error| bad(e.to_string());
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(io)?;
        if &magic != MAGIC {
            return Err(bad("bad magic".into()));
        }
        let n = read_u64(input).map_err(io)? as usize;
        let mut json = vec![0u8; n];
        input.read_exact(&mut json).map_err(io)?;
        let h: BundleHeader = serde_json::from_slice(&json).map_err(|e| bad(e.to_string()))?;
        let w = h.mask.width();
        let mut take = |count: usize| -> Result<Vec<f64>> {
            let mut buf = vec![0u8; count * 8];
            input.read_exact(&mut buf).map_err(io)?;
            Ok(buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect())
        };
        let mut train = Vec::with_capacity(h.train.len());
        for &(engine_id, len) in &h.train {
            let features = take(len * w)?;
            let labels = Some(take(len)?);
            train.push(EngineSeries {
                engine_id,
                features,
                labels,
            });
        }
        let mut test = Vec::with_capacity(h.test.len());
        for &(engine_id, len) in &h.test {
            test.push(EngineSeries {
                engine_id,
                features: take(len * w)?,
                labels: None,
            });
        }
        Ok(ProcessedDataset {
            config: h.config,
            modes: h.modes,
            norm: h.norm,
            mask: h.mask,
            train,
            test,
            test_rul: h.test_rul,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<ProcessedDataset> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::read_from(&mut bytes.as_slice())
    }

    /// Hex SHA-256 of the serialized bundle.
    pub fn content_hash(&self) -> String {
        hex_digest(&self.to_bytes())
    }

    /// Hex SHA-256 of the normalization table alone.
    pub fn norm_hash(&self) -> String {
        hex_digest(&self.norm.to_bytes())
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "train engines {}, train cycles {}, test engines {}, test cycles {}\n",
            self.train.len(),
            self.train_cycles(),
            self.test.len(),
            self.test_cycles()
        ));
        s.push_str(&format!(
            "operating modes {} (precision {})\n",
            self.modes.len(),
            self.modes.precision
        ));
        let dropped: Vec<String> = (0..N_SENSORS)
            .filter_map(|j| self.mask.dropped[j].map(|r| format!("s{}:{:?}", j + 1, r)))
            .collect();
        s.push_str(&format!(
            "retained sensors {} [{}]\ndropped [{}]\n",
            self.width(),
            self.mask.retained_names().join(" "),
            dropped.join(" ")
        ));
        s
    }
}

pub fn hex_digest(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}
