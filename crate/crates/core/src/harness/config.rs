use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::DataConfig;
use crate::error::{Error, Result};
use crate::reliability::RulConfig;
use crate::vae::VaeConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    /// Supervised baseline on the labeled windows.
    Sl,
    /// One round of self-training with pseudo-labels.
    SelfSsl,
    /// Supervised training on the VAE embedding.
    VaeSsl,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Sl, Method::SelfSsl, Method::VaeSsl];
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Sl => "SL",
            Method::SelfSsl => "Self-SSL",
            Method::VaeSsl => "VAE-SSL",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed; every stochastic choice derives from it.
    pub seed: u64,
    pub fractions: Vec<f64>,
    /// Label masks per fraction below 1.
    pub repetitions: usize,
    /// Models per ensemble.
    pub ensemble: usize,
    pub methods: Vec<Method>,
    /// Train one VAE for the whole grid instead of one per label mask.
    pub shared_vae: bool,
    pub data_dir: PathBuf,
    pub subset: String,
    pub output: PathBuf,
    pub data: DataConfig,
    pub vae: VaeConfig,
    pub rul: RulConfig,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            fractions: vec![1.0, 0.8, 0.5, 0.3, 0.2, 0.1, 0.05, 0.01],
            repetitions: 5,
            ensemble: 5,
            methods: Method::ALL.to_vec(),
            shared_vae: false,
            data_dir: PathBuf::from("data/CMAPSS"),
            subset: "FD001".into(),
            output: PathBuf::from("results"),
            data: DataConfig::default(),
            vae: VaeConfig::default(),
            rul: RulConfig::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(f) = self.fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
            return Err(Error::Config(format!("fraction {f} is outside (0, 1]")));
        }
        if self.repetitions == 0 || self.ensemble == 0 {
            return Err(Error::Config("repetitions and ensemble must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("no methods selected".into()));
        }
        self.data.validate()?;
        self.vae.validate()?;
        self.rul.validate()
    }

    /// Repetitions actually run at `fraction`: one when nothing is dropped.
    pub fn reps_for(&self, fraction: f64) -> usize {
        if fraction >= 1.0 {
            1
        } else {
            self.repetitions
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toml_round_trip() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml().unwrap();
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_files_fall_back_to_defaults() {
        let cfg = ExperimentConfig::from_toml("seed = 7\n[vae]\nalpha = 2.5\n").unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.vae.alpha, 2.5);
        assert_eq!(cfg.vae.latent_dim, 4);
        assert_eq!(cfg.repetitions, 5);
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(ExperimentConfig::from_toml("fractions = [0.0]").is_err());
        assert!(ExperimentConfig::from_toml("fractions = [1.5]").is_err());
        assert!(ExperimentConfig::from_toml("ensemble = 0").is_err());
        assert!(ExperimentConfig::from_toml("unknown_key = 1").is_err());
        assert!(ExperimentConfig::from_toml("methods = [\"magic\"]").is_err());
    }

    #[test]
    fn single_repetition_without_dropping() {
        let cfg = ExperimentConfig::default();
        assert_eq!(cfg.reps_for(1.0), 1);
        assert_eq!(cfg.reps_for(0.3), 5);
    }
}
