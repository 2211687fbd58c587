use serde::{Deserialize, Serialize};

use super::{Protocol, RoundTrace, SystemState};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{column, forward_range, mae, LayerInput, SplitModelParams};

/// MAE of `client` followed by `server` over every row of `dataset`.
pub fn evaluate(client: &SplitModelParams, server: &SplitModelParams, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Data("evaluation set is empty".into()));
    }
    if client.first_layer() != 1 || server.first_layer() != client.last_layer() + 1 {
        return Err(Error::contract(format!(
            "client holds {:?} and server {:?}; they must cover the network from layer 1",
            client.layers(),
            server.layers()
        )));
    }
    let rows: Vec<usize> = (0..dataset.len()).collect();
    let raw = dataset.batch(&rows);
    let smashed = forward_range(client, 1, client.last_layer(), LayerInput::Raw(&raw))?;
    let pred = forward_range(server, server.first_layer(), server.last_layer(), LayerInput::Hidden(&smashed))?;
    mae(&pred.values, &column(&dataset.target))
}

/// Held-out MAE of a state.
///
/// Aggregating protocols share one client model. Without aggregation every user
/// keeps its own client model, so the result is the mean of the per-user MAEs.
pub fn evaluate_state(state: &SystemState, protocol: Protocol, dataset: &Dataset) -> Result<f64> {
    if protocol.aggregates() {
        evaluate(&state.clients[0], &state.server, dataset)
    } else {
        let mut total = 0.0;
        for client in &state.clients {
            total += evaluate(client, &state.server, dataset)?;
        }
        Ok(total / state.clients.len() as f64)
    }
}

/// Samples processed per simulated second over `traces`.
pub fn throughput(traces: &[RoundTrace]) -> Result<f64> {
    let wall: f64 = traces.iter().map(|t| t.sync_delay).sum();
    if !(wall > 0.0) {
        return Err(Error::contract("throughput needs positive wall time"));
    }
    let samples: usize = traces.iter().map(|t| t.samples_processed).sum();
    Ok(samples as f64 / wall)
}

/// One `(protocol, epoch)` line of the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub protocol: Protocol,
    /// 1-based.
    pub epoch: usize,
    pub train_mae: f64,
    pub eval_mae: f64,
    pub throughput: f64,
    /// Mean per-round sync delay over the epoch.
    pub sync_delay: f64,
    pub aggregations: usize,
}

impl MetricsRow {
    pub const HEADER: &'static str = "protocol,epoch,train_mae,eval_mae,throughput,sync_delay,aggregations";

    pub fn to_csv_line(&self) -> String {
        use crate::fmt_f64;
        format!(
            "{},{},{},{},{},{},{}",
            self.protocol,
            self.epoch,
            fmt_f64(self.train_mae),
            fmt_f64(self.eval_mae),
            fmt_f64(self.throughput),
            fmt_f64(self.sync_delay),
            self.aggregations
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rows: Vec<MetricsRow>,
}

impl MetricsReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from(MetricsRow::HEADER);
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.to_csv_line());
            out.push('\n');
        }
        out
    }

    pub fn for_protocol(&self, protocol: Protocol) -> impl Iterator<Item = &MetricsRow> {
        self.rows.iter().filter(move |r| r.protocol == protocol)
    }

    pub fn last(&self, protocol: Protocol) -> Option<&MetricsRow> {
        self.for_protocol(protocol).last()
    }
}
