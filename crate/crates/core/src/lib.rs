//! Adversarial zero-shot feature synthesis.
//!
//! A conditional generator learns to produce visual features from semantic
//! embeddings of seen categories; features synthesized for unseen categories
//! then train nearest-neighbour and SVM classifiers.

pub mod config;
pub mod container;
pub mod data;
pub mod error;
pub mod eval;
pub mod losses;
pub mod models;
pub mod trainer;

pub use config::{Ablation, TrainConfig};
pub use error::{Error, Result};
