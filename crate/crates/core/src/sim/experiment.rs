use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::metrics::{evaluate_state, throughput, MetricsReport, MetricsRow};
use super::round::{run_round, NoAuxiliary, RoundContext, RoundTrace};
use super::{Protocol, SystemState};
use crate::crom::CromConfig;
use crate::data::{generate_synthetic, holdout_indices, load_csv, partition, Dataset, Schema, Shard, SyntheticSpec};
use crate::error::{Error, Result};
use crate::model::ArchSpec;
use crate::system::{CostModel, UserProfile};

const STREAM_DATA: u64 = 1;
const STREAM_PARTITION: u64 = 2;
const STREAM_INIT: u64 = 3;
const STREAM_JITTER: u64 = 4;

/// Independent sub-seed for `stream` (splitmix64 finalizer).
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Network widths; feature count and vocabularies come from the data.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkShape {
    pub wide_out_dim: usize,
    pub embed_dim1: usize,
    pub embed_dim2: usize,
    pub client_hidden: Vec<usize>,
    pub server_hidden: Vec<usize>,
    pub output_dim: usize,
    /// Defaults to the last client dense layer.
    pub split_layer: Option<usize>,
}

impl Default for NetworkShape {
    fn default() -> Self {
        let a = ArchSpec::wide_and_deep(1, 1, 1);
        Self {
            wide_out_dim: a.wide_out_dim,
            embed_dim1: a.embed_dim1,
            embed_dim2: a.embed_dim2,
            client_hidden: a.client_hidden,
            server_hidden: a.server_hidden,
            output_dim: a.output_dim,
            split_layer: None,
        }
    }
}

impl NetworkShape {
    pub fn resolve(&self, num_numeric: usize, vocab1: usize, vocab2: usize) -> Result<ArchSpec> {
        let arch = ArchSpec {
            num_numeric_features: num_numeric,
            vocab1,
            vocab2,
            wide_out_dim: self.wide_out_dim,
            embed_dim1: self.embed_dim1,
            embed_dim2: self.embed_dim2,
            client_hidden: self.client_hidden.clone(),
            server_hidden: self.server_hidden.clone(),
            output_dim: self.output_dim,
            split_layer: self.split_layer.unwrap_or(1 + self.client_hidden.len()),
        };
        arch.validate()?;
        Ok(arch)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DataSource {
    /// Generated rows: `num_users × per_user` for training plus `eval_samples` held out.
    Synthetic { spec: SyntheticSpec, eval_samples: usize },
    /// Rows not assigned to a shard form the held-out set.
    Csv { path: PathBuf, schema: Schema },
}

/// Fully resolved experiment description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub seed: u64,
    pub network: NetworkShape,
    pub data: DataSource,
    pub num_users: usize,
    pub per_user: usize,
    pub batch_size: usize,
    pub profiles: Vec<UserProfile>,
    pub cost: CostModel,
    pub jitter: f64,
    pub protocols: Vec<Protocol>,
    pub epochs: usize,
    pub lr: f64,
    pub crom: CromConfig,
}

impl ExperimentSpec {
    /// Seed the synthetic generator receives.
    pub fn data_seed(&self) -> u64 {
        derive_seed(self.seed, STREAM_DATA)
    }

    /// Checks everything that does not need the data.
    pub fn validate(&self) -> Result<()> {
        if self.num_users == 0 {
            return Err(Error::config("data.num_users must be >= 1"));
        }
        if self.per_user == 0 {
            return Err(Error::config("data.per_user must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("data.batch_size must be >= 1"));
        }
        if self.profiles.len() != self.num_users {
            return Err(Error::config(format!(
                "data.num_users is {} but profiles has {} entries",
                self.num_users,
                self.profiles.len()
            )));
        }
        for (i, p) in self.profiles.iter().enumerate() {
            if p.user_id != i {
                return Err(Error::config(format!("profiles[{i}].user_id must be {i}, got {}", p.user_id)));
            }
            p.validate()?;
        }
        self.cost.validate()?;
        if !(0.0..1.0).contains(&self.jitter) {
            return Err(Error::config(format!("system.jitter must lie in [0, 1), got {}", self.jitter)));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::config(format!("training.lr must be > 0, got {}", self.lr)));
        }
        if self.protocols.is_empty() {
            return Err(Error::config("protocols must name at least one protocol"));
        }
        let w = &self.crom.weights;
        for (name, v) in [("alpha", w.alpha), ("beta", w.beta), ("gamma", w.gamma)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(format!("crom.{name} must be finite and >= 0")));
            }
        }
        if !(self.crom.helper_budget > 0.0) {
            return Err(Error::config("crom.helper_budget must be > 0"));
        }
        if !(self.crom.d2d_timeout > 0.0) {
            return Err(Error::config("crom.d2d_timeout must be > 0"));
        }
        match &self.data {
            DataSource::Synthetic { spec, eval_samples } => {
                if *eval_samples == 0 {
                    return Err(Error::config("data.eval_samples must be >= 1"));
                }
                if spec.num_numeric == 0 || spec.vocab1 == 0 || spec.vocab2 == 0 {
                    return Err(Error::config("data.synthetic needs num_numeric, vocab1, vocab2 >= 1"));
                }
                if !(spec.noise_sigma >= 0.0) || !spec.noise_sigma.is_finite() {
                    return Err(Error::config("data.synthetic.noise_sigma must be >= 0"));
                }
                self.network.resolve(spec.num_numeric, spec.vocab1, spec.vocab2)?;
            }
            DataSource::Csv { schema, .. } => {
                self.network.resolve(schema.numeric.len().max(1), 1, 1)?;
            }
        }
        Ok(())
    }
}

/// Data, shards and network built from a spec; shared by every protocol.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub eval: Dataset,
    pub arch: ArchSpec,
    pub shards: Vec<Shard>,
}

impl Prepared {
    /// Fresh state for one protocol run; identical across protocols.
    pub fn initial_state(&self, spec: &ExperimentSpec) -> Result<SystemState> {
        SystemState::new(
            self.arch.clone(),
            derive_seed(spec.seed, STREAM_INIT),
            derive_seed(spec.seed, STREAM_JITTER),
            spec.profiles.clone(),
            self.shards.clone(),
        )
    }
}

pub fn prepare(spec: &ExperimentSpec) -> Result<Prepared> {
    spec.validate()?;
    let dataset = match &spec.data {
        DataSource::Synthetic { spec: syn, eval_samples } => {
            let n = spec.num_users * spec.per_user + eval_samples;
            generate_synthetic(spec.data_seed(), n, syn)?
        }
        DataSource::Csv { path, schema } => load_csv(path, schema)?,
    };
    let arch = spec
        .network
        .resolve(dataset.num_numeric(), dataset.vocab1, dataset.vocab2)?;
    let mut shards = partition(
        &dataset,
        spec.num_users,
        spec.per_user,
        derive_seed(spec.seed, STREAM_PARTITION),
    )?;
    for (shard, profile) in shards.iter_mut().zip(&spec.profiles) {
        shard.data_quality = profile.data_quality;
    }
    let held_out = holdout_indices(&dataset, &shards);
    if held_out.is_empty() {
        return Err(Error::config(format!(
            "no rows left for evaluation: {} users × {} samples uses the whole dataset",
            spec.num_users, spec.per_user
        )));
    }
    let eval = dataset.subset(&held_out);
    Ok(Prepared {
        dataset,
        eval,
        arch,
        shards,
    })
}

/// One round of one protocol, as written to the trace file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub protocol: Protocol,
    pub epoch: usize,
    #[serde(flatten)]
    pub trace: RoundTrace,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    pub report: MetricsReport,
    pub rounds: Vec<RoundRecord>,
}

/// Runs every selected protocol for the configured number of epochs.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    let prepared = prepare(spec)?;
    let mut out = ExperimentOutput::default();
    if spec.epochs == 0 {
        return Ok(out);
    }
    let ctx = RoundContext {
        dataset: &prepared.dataset,
        cost: &spec.cost,
        crom: &spec.crom,
        lr: spec.lr,
        batch_size: spec.batch_size,
        jitter: spec.jitter,
    };
    for &protocol in &spec.protocols {
        let mut state = prepared.initial_state(spec)?;
        let rounds = state.rounds_per_epoch(spec.batch_size);
        for epoch in 1..=spec.epochs {
            let mut traces = Vec::with_capacity(rounds);
            for _ in 0..rounds {
                let (next, trace) = run_round(&state, &ctx, protocol, &mut NoAuxiliary)?;
                state = next;
                traces.push(trace);
            }
            let samples: usize = traces.iter().map(|t| t.samples_processed).sum();
            let abs_error: f64 = traces.iter().map(|t| t.train_abs_error).sum();
            out.report.rows.push(MetricsRow {
                protocol,
                epoch,
                train_mae: abs_error / samples as f64,
                eval_mae: evaluate_state(&state, protocol, &prepared.eval)?,
                throughput: throughput(&traces)?,
                sync_delay: traces.iter().map(|t| t.sync_delay).sum::<f64>() / traces.len() as f64,
                aggregations: traces.iter().map(|t| t.aggregations).sum(),
            });
            out.rounds
                .extend(traces.into_iter().map(|trace| RoundRecord { protocol, epoch, trace }));
        }
    }
    Ok(out)
}
