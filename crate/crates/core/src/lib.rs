//! Bayesian intent decoding for cursor navigation on a grid keyboard.
//!
//! The pieces, bottom up:
//!
//! - [`graph`]: the toroidal keyboard, its actions, and the user's intent policy.
//! - [`prior`]: character n-gram context priors and synthetic favour/oppose priors.
//! - [`evidence`]: Gaussian calibration profiles that stand in for recorded EEG.
//! - [`inference`]: the recursive target posterior and the joint, marginal and
//!   baseline action decoders.
//! - [`epoch`]: the repetition loop and the two ways an epoch ends.
//! - [`sim`], [`report`], [`stats`]: the Monte Carlo typing study.
//! - [`config`]: the run configuration file.

pub mod config;
pub mod epoch;
pub mod error;
pub mod evidence;
pub mod graph;
pub mod inference;
pub mod prior;
pub mod report;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};

/// Small public-domain English text used when no corpus is configured.
pub const BUNDLED_CORPUS: &str = include_str!("../data/corpus.txt");
