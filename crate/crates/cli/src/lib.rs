//! Experiment runner for variable-length feedback coding.
//!
//! A TOML [`config::ExperimentConfig`] (or one of the built-in
//! [`presets`]) describes a grid of systems. [`simulate::simulate`],
//! [`bounds::bounds`] and [`optimize::optimize`] turn it into CSV and JSON
//! reports in an output directory. Every row carries the master seed and a
//! hash of the configuration that produced it.

pub mod bounds;
pub mod config;
pub mod optimize;
pub mod output;
pub mod presets;
pub mod simulate;
pub mod units;

pub use config::ExperimentConfig;
pub use units::RunOptions;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/experiments.md")]
pub struct BookExperiments;
