//! Deterministic round engine for the three training protocols, plus
//! aggregation, evaluation and whole-experiment driving.

mod experiment;
mod fedavg;
mod metrics;
mod round;
mod schedule;
mod state;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

pub use experiment::{
    derive_seed, prepare, run_experiment, DataSource, ExperimentOutput, ExperimentSpec,
    NetworkShape, Prepared, RoundRecord,
};
pub use fedavg::fedavg;
pub use metrics::{evaluate, evaluate_state, throughput, MetricsReport, MetricsRow};
pub use round::{
    round_timeline, run_round, run_round_csfl, run_round_csfl_with, run_round_psl, run_round_sfl,
    AuxiliaryTask, Event, EventKind, NoAuxiliary, RelayRecord, RoundContext, RoundTrace, Route,
    UserTimeline,
};
pub use schedule::{Resource, Slot, TaskGraph, TaskId};
pub use state::SystemState;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Protocol {
    /// Parallel split learning, no aggregation.
    #[serde(rename = "psl")]
    Psl,
    /// Split federated learning, aggregation every round.
    #[serde(rename = "sfl")]
    Sfl,
    /// SFL with greedy matching and relay.
    #[serde(rename = "csfl-g")]
    CsflG,
}

impl Protocol {
    pub const ALL: [Protocol; 3] = [Protocol::Psl, Protocol::Sfl, Protocol::CsflG];

    pub fn label(self) -> &'static str {
        match self {
            Protocol::Psl => "psl",
            Protocol::Sfl => "sfl",
            Protocol::CsflG => "csfl-g",
        }
    }

    pub fn aggregates(self) -> bool {
        self != Protocol::Psl
    }
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Protocol {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        Protocol::ALL
            .into_iter()
            .find(|p| p.label() == s)
            .ok_or_else(|| Error::config(format!("unknown protocol `{s}` (expected psl, sfl or csfl-g)")))
    }
}
