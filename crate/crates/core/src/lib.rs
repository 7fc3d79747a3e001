//! Cross-domain evaluation toolkit for political topic classification.
//!
//! The pipeline is corpus loading and filtering, tokenization and TF-IDF
//! features, a multinomial logistic regression classifier, scenario splits,
//! evaluation, grid search, and a runner that persists self-describing run
//! directories.

pub mod classifier;
pub mod corpus;
pub mod error;
pub mod evalx;
pub mod features;
pub mod label;
pub mod runner;
pub mod splits;
pub mod textpipe;
pub mod tuning;

pub use error::{Error, Result};
pub use label::{TopicLabel, N_CLASSES};

/// Seed used wherever none is given.
pub const DEFAULT_SEED: u64 = 2018;
