use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use tracing::{error, info};

use super::config::{ExperimentConfig, Method};
use super::experiment::{mask_for, rul_config_for, run_experiment, vae_config_for};
use super::report::emit_report;
use crate::data::{load_subset, preprocess, ProcessedDataset};
use crate::error::{Error, Result};
use crate::metrics::MetricReport;
use crate::optim::write_history_csv;
use crate::reliability::{
    ensemble_predict, load_ensemble, save_ensemble, self_learning, train_on_embedding, train_supervised,
    write_predictions, Ensemble, RulMetadata, VaeEmbedding,
};
use crate::vae::{load_vae, save_vae, train_vae, VaeMetadata, VaeModel};

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "vaessl", version, about = "Semi-supervised RUL estimation on C-MAPSS")]
struct Cli {
    /// TOML experiment config; missing keys take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Comma-separated label fractions.
    #[arg(long, global = true, value_delimiter = ',')]
    fractions: Option<Vec<f64>>,
    #[arg(long, global = true)]
    reps: Option<usize>,
    #[arg(long, global = true)]
    ensemble: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory with the raw subset files, or a preprocessed bundle.
    #[arg(long, global = true)]
    data: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Parse and preprocess the raw files into a dataset bundle.
    Preprocess,
    /// Train a VAE on every training window.
    TrainVae,
    /// Train one method's ensemble on a label mask.
    TrainRul {
        #[arg(long, value_enum, default_value_t = Method::Sl)]
        method: Method,
        #[arg(long, default_value_t = 1.0)]
        fraction: f64,
        /// Trained VAE checkpoint for vae-ssl; trained on the fly if absent.
        #[arg(long)]
        vae: Option<PathBuf>,
    },
    /// Score a saved ensemble on the test set.
    Evaluate {
        /// Ensemble path as written by train-rul (without extension).
        #[arg(long)]
        model: PathBuf,
    },
    /// Run the full fraction x repetition x method grid.
    Experiment,
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::NonFinite(_) | Error::Shape { .. } => EXIT_NUMERIC,
        _ => EXIT_DATA,
    }
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    init_logging();
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn resolve_config(cli: &Cli) -> Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(f) = &cli.fractions {
        cfg.fractions = f.clone();
    }
    if let Some(r) = cli.reps {
        cfg.repetitions = r;
    }
    if let Some(e) = cli.ensemble {
        cfg.ensemble = e;
    }
    if let Some(o) = &cli.out {
        cfg.output = o.clone();
    }
    if let Some(d) = &cli.data {
        cfg.data_dir = d.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Loads a bundle when `data_dir` is a file, otherwise parses and
/// preprocesses the raw subset files in it.
pub fn load_dataset(cfg: &ExperimentConfig) -> Result<ProcessedDataset> {
    let path = &cfg.data_dir;
    if path.is_file() {
        let ds = ProcessedDataset::load(path)?;
        if ds.config != cfg.data {
            return Err(Error::Config(format!(
                "{} was preprocessed with a different [data] section",
                path.display()
            )));
        }
        return Ok(ds);
    }
    if !path.is_dir() {
        return Err(Error::Data(format!("data directory {} not found", path.display())));
    }
    let raw = load_subset(path, &cfg.subset)?;
    preprocess(&raw, &cfg.data)
}

fn create_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn vae_metadata(model: &VaeModel, cfg: &ExperimentConfig, ds: &ProcessedDataset) -> VaeMetadata {
    VaeMetadata {
        alpha: cfg.vae.alpha,
        k: cfg.vae.k,
        latent_dim: model.latent_dim(),
        encoder_widths: model.encoder_widths(),
        decoder_widths: model.decoder_widths(),
        sensors: ds.mask.retained_names(),
        normalization_hash: ds.norm_hash(),
    }
}

fn fit_vae(cfg: &ExperimentConfig, ds: &ProcessedDataset, fraction: f64, path: &Path) -> Result<VaeModel> {
    let vcfg = vae_config_for(cfg, fraction, 0);
    let outcome = train_vae(&ds.train_windows(|_| true, false), &vcfg)?;
    save_vae(&outcome.model, &vae_metadata(&outcome.model, cfg, ds), path)?;
    write_history_csv(&path.with_extension("history.csv"), &outcome.history)?;
    info!(path = %path.display(), best_epoch = outcome.best_epoch, "VAE saved");
    Ok(outcome.model)
}

fn check_vae(meta: &VaeMetadata, ds: &ProcessedDataset, path: &Path) -> Result<()> {
    if meta.normalization_hash != ds.norm_hash() || meta.sensors != ds.mask.retained_names() {
        return Err(Error::Checkpoint(format!(
            "{} was trained on differently preprocessed data",
            path.display()
        )));
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = resolve_config(&cli)?;
    let out = cfg.output.clone();
    match cli.command {
        Command::Preprocess => {
            let ds = load_dataset(&cfg)?;
            create_out(&out)?;
            let path = out.join("dataset.bin");
            ds.save(&path)?;
            print!("{}", ds.summary());
            println!("bundle {} sha256 {}", path.display(), ds.content_hash());
        }
        Command::TrainVae => {
            let ds = load_dataset(&cfg)?;
            create_out(&out)?;
            let shared = ExperimentConfig {
                shared_vae: true,
                ..cfg.clone()
            };
            fit_vae(&shared, &ds, 1.0, &out.join("vae.ckpt"))?;
        }
        Command::TrainRul { method, fraction, vae } => {
            if !(fraction > 0.0 && fraction <= 1.0) {
                return Err(Error::Config(format!("fraction {fraction} is outside (0, 1]")));
            }
            let ds = load_dataset(&cfg)?;
            create_out(&out)?;
            let mask = mask_for(cfg.seed, fraction, 0, ds.train.len())?;
            let (dl, du) = ds.split(&mask)?;
            let rul = rul_config_for(&cfg, fraction, 0);
            let (ensemble, embedding) = match method {
                Method::Sl => (
                    Ensemble::train(cfg.ensemble, &rul, |c| Ok(train_supervised(&dl, c)?.model))?,
                    None,
                ),
                Method::SelfSsl => (
                    Ensemble::train(cfg.ensemble, &rul, |c| Ok(self_learning(&dl, &du, c)?.model.model))?,
                    None,
                ),
                Method::VaeSsl => {
                    let (model, path) = match vae {
                        Some(p) => {
                            let (m, meta) = load_vae(&p)?;
                            check_vae(&meta, &ds, &p)?;
                            (m, p)
                        }
                        None => {
                            let p = out.join("vae.ckpt");
                            (fit_vae(&cfg, &ds, fraction, &p)?, p)
                        }
                    };
                    let emb = VaeEmbedding {
                        model: &model,
                        k: cfg.vae.k,
                    };
                    let e = Ensemble::train(cfg.ensemble, &rul, |c| Ok(train_on_embedding(&emb, &dl, c)?.model))?;
                    (e, Some((path, cfg.vae.k)))
                }
            };
            let meta = RulMetadata {
                input_width: ensemble.input_width(),
                widths: rul.widths.clone(),
                batch_norm: rul.batch_norm,
                max_rul: rul.max_rul,
                members: ensemble.members.len(),
                embedding,
            };
            let path = out.join("rul");
            save_ensemble(&ensemble, &meta, &path)?;
            info!(path = %path.display(), labeled = mask.n_labeled(), "ensemble saved");
        }
        Command::Evaluate { model } => {
            let ds = load_dataset(&cfg)?;
            let (ensemble, meta) = load_ensemble(&model)?;
            let test = ds.test_windows();
            let inputs = match &meta.embedding {
                Some((path, k)) => {
                    let (vae, vmeta) = load_vae(path)?;
                    check_vae(&vmeta, &ds, path)?;
                    vae.embed_set(&test, *k)?
                }
                None => test.clone(),
            };
            let pred = ensemble_predict(&ensemble, &inputs)?;
            let truth = test.labels()?;
            let report = MetricReport::compute(&pred, truth)?;
            println!("{}", MetricReport::CSV_HEADER);
            println!("{}", report.csv_row());
            create_out(&out)?;
            write_predictions(&out.join("predictions.csv"), &test.engine_ids, truth, &pred)?;
        }
        Command::Experiment => {
            let ds = load_dataset(&cfg)?;
            let report = run_experiment(&cfg, &ds)?;
            let files = emit_report(&report, &cfg, &ds.content_hash(), &out)?;
            for f in files {
                println!("{}", f.display());
            }
        }
    }
    Ok(())
}
