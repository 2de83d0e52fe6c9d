//! Recurrent sequence classifiers for telemetry anomaly detection, with the
//! small numeric, preprocessing, feature and evaluation toolkit they need.
//!
//! Everything is deterministic given a seed: see [`rng`] for the named
//! random streams each stage draws from.

pub mod dataset;
pub mod datagen;
pub mod evaluate;
pub mod features;
pub mod numkit;
pub mod preprocess;
pub mod recurrent;
pub mod training;
pub mod rng;
