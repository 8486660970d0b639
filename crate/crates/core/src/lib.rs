//! Semi-supervised remaining-useful-life estimation.
//!
//! A recurrent variational autoencoder is trained on every available sensor
//! window, labeled or not. The deterministic output of one of its encoder
//! layers then serves as the input space of a recurrent RUL regressor that is
//! trained on the labeled windows only.

pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod ndcore;
pub mod nn;
pub mod optim;
pub mod reliability;
pub mod vae;

pub use error::{Error, Result};
