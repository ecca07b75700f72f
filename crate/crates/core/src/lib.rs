//! Tuning post-hoc out-of-distribution detectors using only the
//! in-distribution training data of a classifier.
//!
//! Simulated OOD data is produced by leaving classes out of the training
//! set, retraining variant classifiers and scoring the held-out classes
//! against held-in validation samples. Detector parameters are then chosen
//! by Gaussian-process Bayesian optimization of the averaged AUROC.

pub mod baselines;
pub mod bayesopt;
pub mod data;
pub mod detectors;
pub mod error;
pub mod evaluation;
pub mod linalg;
pub mod metrics;
pub mod net;
pub mod seed;
pub mod simulation;
pub mod synth;
pub mod tuner;

pub use error::{Error, Result};
