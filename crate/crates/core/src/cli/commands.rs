use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use super::config::ExperimentConfig;
use crate::data::{generate_synthetic, write_csv, SyntheticSpec};
use crate::error::{Error, Result};
use crate::sim::{run_experiment, ExperimentOutput, MetricsRow, RoundRecord};

#[derive(Serialize)]
struct TraceFile<'a> {
    rounds: &'a [RoundRecord],
}

/// Paths written by [`cmd_run`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunFiles {
    pub metrics: PathBuf,
    pub trace: PathBuf,
}

pub fn trace_json(rounds: &[RoundRecord]) -> Result<String> {
    let mut text =
        serde_json::to_string_pretty(&TraceFile { rounds }).map_err(|e| Error::Serialize(e.to_string()))?;
    text.push('\n');
    Ok(text)
}

/// Runs the experiment and writes the metrics CSV and trace JSON into `out_dir`.
pub fn cmd_run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunFiles> {
    let output = run_experiment(&config.spec)?;
    write_run(config, &output, out_dir)
}

fn write_run(config: &ExperimentConfig, output: &ExperimentOutput, out_dir: &Path) -> Result<RunFiles> {
    fs::create_dir_all(out_dir)?;
    let files = RunFiles {
        metrics: out_dir.join(&config.output.metrics),
        trace: out_dir.join(&config.output.trace),
    };
    fs::write(&files.metrics, output.report.to_csv())?;
    fs::write(&files.trace, trace_json(&output.rounds)?)?;
    Ok(files)
}

/// Paths written by [`cmd_sweep`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SweepFiles {
    /// One metrics file per value, in value order.
    pub metrics: Vec<PathBuf>,
    pub summary: PathBuf,
}

/// Parses a command line value as a TOML scalar, falling back to a string.
fn parse_scalar(text: &str) -> toml::Value {
    let wrapped = format!("v = {text}");
    match toml::from_str::<toml::Table>(&wrapped) {
        Ok(mut t) => match t.remove("v") {
            Some(v) if !v.is_table() && !v.is_array() => v,
            _ => toml::Value::String(text.to_string()),
        },
        Err(_) => toml::Value::String(text.to_string()),
    }
}

/// Sets the scalar at dotted `axis` in `table`; numeric segments index arrays.
pub fn set_axis(table: &mut toml::Table, axis: &str, value: toml::Value) -> Result<()> {
    let parts: Vec<&str> = axis.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(Error::config(format!("sweep axis `{axis}` is not a dotted key path")));
    }
    let mut root = toml::Value::Table(std::mem::take(table));
    let result = set_path(&mut root, &parts, axis, value);
    if let toml::Value::Table(t) = root {
        *table = t;
    }
    result
}

fn set_path(node: &mut toml::Value, parts: &[&str], axis: &str, value: toml::Value) -> Result<()> {
    let not_scalar = || Error::config(format!("sweep axis `{axis}` does not name a scalar"));
    let (head, rest) = parts.split_first().expect("non-empty path");
    let child = match node {
        toml::Value::Table(t) if rest.is_empty() => {
            if t.get(*head).is_some_and(|v| v.is_table() || v.is_array()) {
                return Err(not_scalar());
            }
            t.insert(head.to_string(), value);
            return Ok(());
        }
        toml::Value::Table(t) => t
            .entry(head.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new())),
        toml::Value::Array(items) => {
            let i: usize = head
                .parse()
                .map_err(|_| Error::config(format!("sweep axis `{axis}`: `{head}` is not an array index")))?;
            let len = items.len();
            let item = items
                .get_mut(i)
                .ok_or_else(|| Error::config(format!("sweep axis `{axis}`: index {i} out of {len}")))?;
            if rest.is_empty() {
                if item.is_table() || item.is_array() {
                    return Err(not_scalar());
                }
                *item = value;
                return Ok(());
            }
            item
        }
        _ => return Err(not_scalar()),
    };
    if rest.is_empty() {
        return Err(not_scalar());
    }
    set_path(child, rest, axis, value)
}

/// Builds one validated config per sweep value.
pub fn sweep_configs(
    base: &toml::Table,
    base_dir: Option<&Path>,
    axis: &str,
    values: &[String],
) -> Result<Vec<ExperimentConfig>> {
    if values.is_empty() {
        return Err(Error::config("sweep needs at least one value"));
    }
    values
        .iter()
        .map(|v| {
            let mut table = base.clone();
            set_axis(&mut table, axis, parse_scalar(v))?;
            let text = toml::to_string(&table).map_err(|e| Error::Serialize(e.to_string()))?;
            ExperimentConfig::from_toml_str(&text, base_dir)
        })
        .collect()
}

/// Runs one experiment per value of `axis` (in parallel) and writes
/// `metrics_<i>.csv` per value plus `summary.csv` with an `axis_value` column.
pub fn cmd_sweep(
    base: &toml::Table,
    base_dir: Option<&Path>,
    axis: &str,
    values: &[String],
    adjust: impl Fn(ExperimentConfig) -> Result<ExperimentConfig>,
    out_dir: &Path,
) -> Result<SweepFiles> {
    let configs = sweep_configs(base, base_dir, axis, values)?
        .into_iter()
        .map(adjust)
        .collect::<Result<Vec<_>>>()?;
    let outputs = configs
        .par_iter()
        .map(|c| run_experiment(&c.spec))
        .collect::<Result<Vec<_>>>()?;

    fs::create_dir_all(out_dir)?;
    let mut files = Vec::with_capacity(values.len());
    let mut summary = format!("axis_value,{}\n", MetricsRow::HEADER);
    for (i, (value, output)) in values.iter().zip(&outputs).enumerate() {
        let path = out_dir.join(format!("metrics_{i}.csv"));
        fs::write(&path, output.report.to_csv())?;
        files.push(path);
        let label = value.replace([',', '\n', '\r'], "_");
        for row in &output.report.rows {
            summary.push_str(&label);
            summary.push(',');
            summary.push_str(&row.to_csv_line());
            summary.push('\n');
        }
    }
    let summary_path = out_dir.join("summary.csv");
    fs::write(&summary_path, summary)?;
    Ok(SweepFiles {
        metrics: files,
        summary: summary_path,
    })
}

/// Writes `n` synthetic rows drawn with `seed` as a CSV readable by the loader.
pub fn cmd_gen_data(spec: &SyntheticSpec, n: usize, seed: u64, path: &Path) -> Result<()> {
    let dataset = generate_synthetic(seed, n, spec)?;
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    write_csv(&dataset, path)
}
