//! Collaborative relay optimization: split users into efficient and bottleneck
//! classes, pair helpers with bottlenecks, and pick the layer at which each
//! bottleneck hands its intermediate activation to its helper.

mod classify;
mod matching;
mod relay;

use serde::{Deserialize, Serialize};

pub use classify::{classify_users, Classes};
pub use matching::{
    gradient_distance, gradient_rematch, greedy_match, initial_match_score, match_by_distance,
    score_matrix, ScoreNormalization, ScoreWeights,
};
pub use relay::{
    determine_partition_point, pair_link, partition_from_times, plan_relays, Demotion,
    DemotionReason, PartitionDecision, RelaySchedule,
};

/// How gradient affinity between two users is measured when re-matching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RematchMetric {
    /// `‖g_h − g_b‖₂`
    #[default]
    NormOfDifference,
    /// `|‖g_h‖₂ − ‖g_b‖₂|`
    DifferenceOfNorms,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MatchSource {
    InitialScore,
    GradientSimilarity,
}

/// One-to-one pairing of helpers with bottleneck users for a round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPlan {
    pub round_index: usize,
    pub source: MatchSource,
    pub efficient: Vec<usize>,
    pub bottleneck: Vec<usize>,
    /// `(helper_id, bottleneck_id)`
    pub pairs: Vec<(usize, usize)>,
    /// Users training alone this round, ascending.
    pub solo: Vec<usize>,
    /// Users whose pairs were scored with the initial score because their gradient was missing.
    pub fallback: Vec<usize>,
}

impl MatchPlan {
    pub fn helper_of(&self, bottleneck: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.1 == bottleneck).map(|p| p.0)
    }

    /// Checks the one-to-one and disjointness invariants.
    pub fn is_matching(&self) -> bool {
        let mut seen = std::collections::BTreeSet::new();
        for &(h, b) in &self.pairs {
            if h == b || !seen.insert(h) || !seen.insert(b) {
                return false;
            }
        }
        self.solo.iter().all(|u| seen.insert(*u))
    }
}

/// Matching and relay knobs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CromConfig {
    pub weights: ScoreWeights,
    /// First round (0-based) matched by gradient similarity.
    pub rematch_round: usize,
    pub rematch_metric: RematchMetric,
    /// Relay forward compute may be at most this multiple of the helper's own stage-1 compute.
    pub helper_budget: f64,
    /// Ship the bottleneck's own layer weights with the handoff instead of using the helper's copy.
    pub ship_weights: bool,
    /// Seconds; a pair whose handoff transfer takes longer is demoted to solo.
    pub d2d_timeout: f64,
}

impl Default for CromConfig {
    fn default() -> Self {
        Self {
            weights: ScoreWeights::default(),
            rematch_round: 5,
            rematch_metric: RematchMetric::default(),
            helper_budget: 2.0,
            ship_weights: false,
            d2d_timeout: 1.0,
        }
    }
}

#[cfg(test)]
mod tests;
