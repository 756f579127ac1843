//! Robust distributed optimization under Markovian Byzantine corruption.
//!
//! The crate is organized bottom-up:
//!
//! - [`estimator`]: the coordinate-wise median-based robust mean and its error constant.
//! - [`corruption`]: per-agent two-state Markov chains and attack strategies.
//! - [`problems`]: objectives, synthetic data and gradient oracles (SAA and SA).
//! - [`optimizer`]: the RANGE update (temporal robust averaging, robust
//!   aggregation, normalized projected step) and baseline aggregation rules.
//! - [`planner`]: failure-probability bounds and parameter selection.
//! - [`harness`]: experiment configs, seeded runs, sweeps and Monte Carlo
//!   validation of the bounds.

pub mod corruption;
pub mod error;
pub mod estimator;
pub mod harness;
pub mod optimizer;
pub mod planner;
pub mod problems;
pub mod rng;

pub use error::{Error, Result};
