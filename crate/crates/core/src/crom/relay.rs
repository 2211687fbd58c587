use serde::{Deserialize, Serialize};

use super::{CromConfig, MatchPlan};
use crate::error::{Error, Result};
use crate::model::ArchSpec;
use crate::system::{activation_bytes, compute_time, transfer_time, CostModel, UserProfile};

/// Where a bottleneck stops and hands its intermediate activation to its helper.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionDecision {
    pub helper_id: usize,
    pub bottleneck_id: usize,
    /// Last layer computed by the bottleneck, `1 ≤ p ≤ s`; `p = s` means no relay.
    pub partition_point: usize,
    /// Simulated seconds at which the bottleneck sends its intermediate activation.
    pub handoff_time: f64,
    pub intermediate_bytes: usize,
    /// Extra handoff bytes when the bottleneck's own weights travel with the activation.
    pub shipped_weight_bytes: usize,
    /// Helper's own client forward time (stage 1).
    pub helper_stage1_time: f64,
}

impl PartitionDecision {
    pub fn relays(&self, split_layer: usize) -> bool {
        self.partition_point < split_layer
    }

    pub fn handoff_bytes(&self) -> usize {
        self.intermediate_bytes + self.shipped_weight_bytes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DemotionReason {
    /// Relay compute would exceed the helper's budget.
    HelperBudget,
    /// Handoff transfer would exceed the D2D timeout.
    D2dTimeout,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demotion {
    pub helper_id: usize,
    pub bottleneck_id: usize,
    pub reason: DemotionReason,
}

/// Final relay arrangement for a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelaySchedule {
    /// Plan after demotions.
    pub plan: MatchPlan,
    /// One decision per surviving pair.
    pub decisions: Vec<PartitionDecision>,
    pub demotions: Vec<Demotion>,
}

impl RelaySchedule {
    /// Decision for `bottleneck` if it actually hands work to a helper.
    pub fn relay_for(&self, bottleneck: usize, split_layer: usize) -> Option<&PartitionDecision> {
        self.decisions
            .iter()
            .find(|d| d.bottleneck_id == bottleneck && d.relays(split_layer))
    }
}

/// Largest `k` whose cumulative time fits within `helper_time`, clamped to `[1, len]`.
fn partition_from_cumulative(helper_time: f64, cumulative: &[f64]) -> usize {
    let fitted = cumulative.iter().take_while(|&&t| t <= helper_time).count();
    fitted.clamp(1, cumulative.len().max(1))
}

/// Partition point from per-layer bottleneck times for layers `1..=s`.
pub fn partition_from_times(helper_time: f64, layer_times: &[f64]) -> usize {
    let mut acc = 0.0;
    let cumulative: Vec<f64> = layer_times
        .iter()
        .map(|t| {
            acc += t;
            acc
        })
        .collect();
    partition_from_cumulative(helper_time, &cumulative)
}

/// D2D link of a pair: the slower rate and the larger per-message latency.
pub fn pair_link(a: &UserProfile, b: &UserProfile) -> (f64, f64) {
    (a.d2d_rate.min(b.d2d_rate), a.link_latency.max(b.link_latency))
}

/// Picks the partition point from the deterministic timing model.
///
/// `T_h` is the helper's own client forward time; the bottleneck keeps the
/// deepest prefix of layers it can finish by then.
pub fn determine_partition_point(
    helper: &UserProfile,
    bottleneck: &UserProfile,
    arch: &ArchSpec,
    cost: &CostModel,
    batch: usize,
    ship_weights: bool,
) -> Result<PartitionDecision> {
    let s = arch.split_layer;
    let helper_time = compute_time(helper, arch, 1, s, batch)?;
    let cumulative = (1..=s)
        .map(|k| compute_time(bottleneck, arch, 1, k, batch))
        .collect::<Result<Vec<f64>>>()?;
    let p = partition_from_cumulative(helper_time, &cumulative);
    let shipped_weight_bytes = if ship_weights && p < s {
        (p + 1..=s).map(|l| arch.layer_param_count(l)).sum::<Result<usize>>()?
            * cost.bytes_per_element
    } else {
        0
    };
    Ok(PartitionDecision {
        helper_id: helper.user_id,
        bottleneck_id: bottleneck.user_id,
        partition_point: p,
        handoff_time: helper_time.max(cumulative[p - 1]),
        intermediate_bytes: activation_bytes(arch, p, batch, cost.bytes_per_element)?,
        shipped_weight_bytes,
        helper_stage1_time: helper_time,
    })
}

/// Computes partition points for every pair and demotes pairs that would
/// overload the helper or stall on the D2D link.
pub fn plan_relays(
    plan: &MatchPlan,
    profiles: &[UserProfile],
    arch: &ArchSpec,
    cost: &CostModel,
    cfg: &CromConfig,
    batch: usize,
) -> Result<RelaySchedule> {
    let profile = |u: usize| {
        profiles
            .get(u)
            .ok_or_else(|| Error::contract(format!("no profile for user {u}")))
    };
    let s = arch.split_layer;
    let mut out = plan.clone();
    out.pairs.clear();
    let mut decisions = Vec::new();
    let mut demotions = Vec::new();

    for &(h, b) in &plan.pairs {
        let (hp, bp) = (profile(h)?, profile(b)?);
        let d = determine_partition_point(hp, bp, arch, cost, batch, cfg.ship_weights)?;
        let reason = if d.relays(s) {
            let relay_time = compute_time(hp, arch, d.partition_point + 1, s, batch)?;
            let (rate, latency) = pair_link(hp, bp);
            let handoff = transfer_time(d.handoff_bytes(), rate, latency)?;
            if relay_time > cfg.helper_budget * d.helper_stage1_time {
                Some(DemotionReason::HelperBudget)
            } else if handoff > cfg.d2d_timeout {
                Some(DemotionReason::D2dTimeout)
            } else {
                None
            }
        } else {
            None
        };
        match reason {
            Some(reason) => {
                demotions.push(Demotion {
                    helper_id: h,
                    bottleneck_id: b,
                    reason,
                });
                out.solo.extend([h, b]);
            }
            None => {
                out.pairs.push((h, b));
                decisions.push(d);
            }
        }
    }
    out.solo.sort_unstable();
    Ok(RelaySchedule {
        plan: out,
        decisions,
        demotions,
    })
}
