//! Batch runner for the `zeno-rotor` experiments.
//!
//! A run is described by a TOML file (see [`config`]); [`run::run_experiment`]
//! executes it and [`run::write_artifacts`] writes `series.csv` and
//! `meta.json`.

pub mod config;
pub mod run;

pub use config::{parse_config, ConfigError, ResolvedConfig, RunConfig};
pub use run::{run_experiment, write_artifacts, Meta, RunReport};
