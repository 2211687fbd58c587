//! Operator surface: TOML experiment configs, and the run, sweep, gen-data and
//! validate commands with their CSV/JSON outputs.

mod commands;
mod config;

use std::path::Path;

pub use commands::{
    cmd_gen_data, cmd_run, cmd_sweep, set_axis, sweep_configs, trace_json, RunFiles, SweepFiles,
};
pub use config::{
    validate_config, ExperimentConfig, OutputPaths, DEFAULT_BATCH_SIZE, DEFAULT_EVAL_SAMPLES,
    DEFAULT_LR,
};

use crate::error::{Error, Result};

/// Raw TOML table of a config file, for sweeps that edit keys before validation.
pub fn load_table(path: impl AsRef<Path>) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::config(e.to_string()))
}
