//! Functional distribution networks for 1D regression under distribution
//! shift, with matched-budget stochastic baselines and a calibration-centric
//! evaluation harness.
//!
//! The crate trains small mean-field models whose weights are drawn from an
//! input-conditioned (or global) Gaussian posterior, forms Monte Carlo
//! predictive mixtures, and scores them with MSE, predicted variance,
//! Spearman rank agreement, an MSE-variance least-squares fit, CRPS, and
//! risk-coverage curves on explicit interpolation/extrapolation splits.
//!
//! Start with the runnable examples (`cargo run --release --example ...`):
//!
//! - `autodiff_gradients` — the reverse-mode tape and gradient checker
//! - `predictive_uncertainty` — mixtures, variance decomposition, CRPS
//! - `dataset_export` — synthetic tasks and their ID/OOD splits
//! - `train_one_model` — a single training run end to end
//! - `benchmark_suite` — the full model x task x seed grid
//! - `calibration_report` — tables and SVG figures from stored runs
//!
//! The same functionality is scriptable through the thin `fdn` binary
//! (`run`, `suite`, `eval`, `report`, `gradcheck`).

pub mod adiff;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod models;
pub mod plot;
pub mod prob;
pub mod tasks;

pub use error::{Error, Result};
