use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::crom::{CromConfig, RematchMetric, ScoreWeights};
use crate::data::{Schema, SyntheticSpec};
use crate::error::{Error, Result};
use crate::sim::{DataSource, ExperimentSpec, NetworkShape, Protocol};
use crate::system::{CostModel, UserProfile};

pub const DEFAULT_LR: f64 = 0.02;
pub const DEFAULT_BATCH_SIZE: usize = 32;
pub const DEFAULT_EVAL_SAMPLES: usize = 300;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    seed: Option<u64>,
    protocols: Option<Vec<String>>,
    arch: Option<RawArch>,
    data: Option<RawData>,
    system: Option<RawSystem>,
    profiles: Option<Vec<RawProfile>>,
    training: Option<RawTraining>,
    crom: Option<RawCrom>,
    output: Option<RawOutput>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArch {
    wide_out_dim: Option<usize>,
    embed_dim1: Option<usize>,
    embed_dim2: Option<usize>,
    client_hidden: Option<Vec<usize>>,
    server_hidden: Option<Vec<usize>>,
    output_dim: Option<usize>,
    split_layer: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawData {
    num_users: Option<usize>,
    per_user: Option<usize>,
    batch_size: Option<usize>,
    eval_samples: Option<usize>,
    csv_path: Option<PathBuf>,
    schema: Option<RawSchema>,
    synthetic: Option<RawSynthetic>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSchema {
    numeric: Vec<String>,
    categorical: [String; 2],
    target: String,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSynthetic {
    num_numeric: Option<usize>,
    vocab1: Option<usize>,
    vocab2: Option<usize>,
    noise_sigma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSystem {
    aggregation_latency: Option<f64>,
    bytes_per_element: Option<usize>,
    backward_factor: Option<f64>,
    server_rate: Option<f64>,
    jitter: Option<f64>,
    cpu_scale: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    user_id: Option<usize>,
    cpu_rate: f64,
    data_quality: Option<f64>,
    uplink_rate: f64,
    d2d_rate: f64,
    link_latency: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTraining {
    epochs: Option<usize>,
    lr: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCrom {
    alpha: Option<f64>,
    beta: Option<f64>,
    gamma: Option<f64>,
    rematch_round: Option<usize>,
    rematch_metric: Option<RematchMetric>,
    helper_budget: Option<f64>,
    ship_weights: Option<bool>,
    d2d_timeout: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    metrics: Option<String>,
    trace: Option<String>,
}

/// File names written under the output directory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OutputPaths {
    pub metrics: String,
    pub trace: String,
}

/// Parsed, defaulted and cross-checked experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub spec: ExperimentSpec,
    pub output: OutputPaths,
    /// Keys that were absent and took their default, as dotted paths.
    pub defaulted: Vec<String>,
}

struct Defaults(Vec<String>);

impl Defaults {
    fn take<T>(&mut self, value: Option<T>, key: &str, default: T) -> T {
        value.unwrap_or_else(|| {
            self.0.push(key.to_string());
            default
        })
    }
}

fn required<T>(value: Option<T>, key: &str) -> Result<T> {
    value.ok_or_else(|| Error::config(format!("missing required key `{key}`")))
}

impl ExperimentConfig {
    /// Parses TOML text; relative CSV paths resolve against `base_dir`.
    pub fn from_toml_str(text: &str, base_dir: Option<&Path>) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        let cfg = Self::resolve(raw, base_dir)?;
        cfg.spec.validate()?;
        Ok(cfg)
    }

    fn resolve(raw: RawConfig, base_dir: Option<&Path>) -> Result<Self> {
        let mut d = Defaults(Vec::new());
        let seed = required(raw.seed, "seed")?;

        let protocols = match raw.protocols {
            Some(names) => names.iter().map(|n| n.parse()).collect::<Result<Vec<Protocol>>>()?,
            None => {
                d.0.push("protocols".into());
                Protocol::ALL.to_vec()
            }
        };

        let arch = d.take(raw.arch, "arch", RawArch::default());
        let base = NetworkShape::default();
        let network = NetworkShape {
            wide_out_dim: d.take(arch.wide_out_dim, "arch.wide_out_dim", base.wide_out_dim),
            embed_dim1: d.take(arch.embed_dim1, "arch.embed_dim1", base.embed_dim1),
            embed_dim2: d.take(arch.embed_dim2, "arch.embed_dim2", base.embed_dim2),
            client_hidden: d.take(arch.client_hidden, "arch.client_hidden", base.client_hidden),
            server_hidden: d.take(arch.server_hidden, "arch.server_hidden", base.server_hidden),
            output_dim: d.take(arch.output_dim, "arch.output_dim", base.output_dim),
            split_layer: arch.split_layer,
        };
        if network.split_layer.is_none() {
            d.0.push("arch.split_layer".into());
        }

        let data = required(raw.data, "data")?;
        let num_users = required(data.num_users, "data.num_users")?;
        let per_user = required(data.per_user, "data.per_user")?;
        let batch_size = d.take(data.batch_size, "data.batch_size", DEFAULT_BATCH_SIZE);
        let source = match data.csv_path {
            Some(path) => {
                if data.synthetic.is_some() || data.eval_samples.is_some() {
                    return Err(Error::config(
                        "data.csv_path cannot be combined with data.synthetic or data.eval_samples",
                    ));
                }
                let path = match base_dir {
                    Some(b) if path.is_relative() => b.join(path),
                    _ => path,
                };
                let schema = match data.schema {
                    Some(s) => Schema {
                        numeric: s.numeric,
                        categorical: s.categorical,
                        target: s.target,
                    },
                    None => {
                        d.0.push("data.schema".into());
                        Schema::dementia_like()
                    }
                };
                DataSource::Csv { path, schema }
            }
            None => {
                if data.schema.is_some() {
                    return Err(Error::config("data.schema requires data.csv_path"));
                }
                let syn = d.take(data.synthetic, "data.synthetic", RawSynthetic::default());
                let base = SyntheticSpec::default();
                let spec = SyntheticSpec {
                    num_numeric: d.take(syn.num_numeric, "data.synthetic.num_numeric", base.num_numeric),
                    vocab1: d.take(syn.vocab1, "data.synthetic.vocab1", base.vocab1),
                    vocab2: d.take(syn.vocab2, "data.synthetic.vocab2", base.vocab2),
                    noise_sigma: d.take(syn.noise_sigma, "data.synthetic.noise_sigma", base.noise_sigma),
                };
                let eval_samples = d.take(data.eval_samples, "data.eval_samples", DEFAULT_EVAL_SAMPLES);
                DataSource::Synthetic { spec, eval_samples }
            }
        };

        let system = d.take(raw.system, "system", RawSystem::default());
        let base = CostModel::default();
        let cost = CostModel {
            bytes_per_element: d.take(system.bytes_per_element, "system.bytes_per_element", base.bytes_per_element),
            aggregation_latency: d.take(
                system.aggregation_latency,
                "system.aggregation_latency",
                base.aggregation_latency,
            ),
            backward_factor: d.take(system.backward_factor, "system.backward_factor", base.backward_factor),
            server_rate: d.take(system.server_rate, "system.server_rate", base.server_rate),
        };
        let jitter = d.take(system.jitter, "system.jitter", 0.0);
        let cpu_scale = d.take(system.cpu_scale, "system.cpu_scale", 1.0);
        if !(cpu_scale > 0.0) || !cpu_scale.is_finite() {
            return Err(Error::config(format!("system.cpu_scale must be > 0, got {cpu_scale}")));
        }

        let raw_profiles = required(raw.profiles, "profiles")?;
        let mut profiles = Vec::with_capacity(raw_profiles.len());
        for (i, p) in raw_profiles.into_iter().enumerate() {
            profiles.push(UserProfile {
                user_id: d.take(p.user_id, &format!("profiles[{i}].user_id"), i),
                cpu_rate: p.cpu_rate * cpu_scale,
                data_quality: d.take(p.data_quality, &format!("profiles[{i}].data_quality"), 1.0),
                uplink_rate: p.uplink_rate,
                d2d_rate: p.d2d_rate,
                link_latency: d.take(p.link_latency, &format!("profiles[{i}].link_latency"), 0.0),
            });
        }

        let training = required(raw.training, "training")?;
        let epochs = required(training.epochs, "training.epochs")?;
        let lr = d.take(training.lr, "training.lr", DEFAULT_LR);

        let crom = d.take(raw.crom, "crom", RawCrom::default());
        let base = CromConfig::default();
        let crom = CromConfig {
            weights: ScoreWeights {
                alpha: d.take(crom.alpha, "crom.alpha", base.weights.alpha),
                beta: d.take(crom.beta, "crom.beta", base.weights.beta),
                gamma: d.take(crom.gamma, "crom.gamma", base.weights.gamma),
            },
            rematch_round: d.take(crom.rematch_round, "crom.rematch_round", base.rematch_round),
            rematch_metric: d.take(crom.rematch_metric, "crom.rematch_metric", base.rematch_metric),
            helper_budget: d.take(crom.helper_budget, "crom.helper_budget", base.helper_budget),
            ship_weights: d.take(crom.ship_weights, "crom.ship_weights", base.ship_weights),
            d2d_timeout: d.take(crom.d2d_timeout, "crom.d2d_timeout", base.d2d_timeout),
        };

        let output = d.take(raw.output, "output", RawOutput::default());
        let output = OutputPaths {
            metrics: d.take(output.metrics, "output.metrics", "metrics.csv".into()),
            trace: d.take(output.trace, "output.trace", "trace.json".into()),
        };

        Ok(Self {
            spec: ExperimentSpec {
                seed,
                network,
                data: source,
                num_users,
                per_user,
                batch_size,
                profiles,
                cost,
                jitter,
                protocols,
                epochs,
                lr,
                crom,
            },
            output,
            defaulted: d.0,
        })
    }

    /// Replaces the seed.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.spec.seed = seed;
        self
    }

    /// Keeps only `protocol`; fails if the config does not list it.
    pub fn only_protocol(mut self, protocol: Protocol) -> Result<Self> {
        if !self.spec.protocols.contains(&protocol) {
            return Err(Error::config(format!("protocol `{protocol}` is not listed in protocols")));
        }
        self.spec.protocols = vec![protocol];
        Ok(self)
    }

    /// Human-readable overview including every defaulted key.
    pub fn summary(&self) -> String {
        let s = &self.spec;
        let mut out = String::new();
        let protocols: Vec<&str> = s.protocols.iter().map(|p| p.label()).collect();
        let _ = writeln!(out, "seed: {}", s.seed);
        let _ = writeln!(out, "users: {} × {} samples, batch {}", s.num_users, s.per_user, s.batch_size);
        let _ = writeln!(out, "profiles: {}", s.profiles.len());
        let _ = writeln!(out, "protocols: {}", protocols.join(", "));
        let _ = writeln!(out, "epochs: {}, lr: {}", s.epochs, s.lr);
        if self.defaulted.is_empty() {
            let _ = writeln!(out, "defaulted: none");
        } else {
            let _ = writeln!(out, "defaulted: {}", self.defaulted.join(", "));
        }
        out
    }
}

/// Reads, parses and validates a config file.
pub fn validate_config(path: impl AsRef<Path>) -> Result<ExperimentConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    ExperimentConfig::from_toml_str(&text, path.parent())
}
