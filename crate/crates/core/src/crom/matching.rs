use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::{MatchPlan, MatchSource, RematchMetric};
use crate::system::UserProfile;

/// Weights of the initial match score terms (data quality, link rate, helper CPU).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

impl Default for ScoreWeights {
    fn default() -> Self {
        Self {
            alpha: 1.0 / 3.0,
            beta: 1.0 / 3.0,
            gamma: 1.0 / 3.0,
        }
    }
}

/// Min-max ranges over a candidate set, used to normalize score terms to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreNormalization {
    pub link_min: f64,
    pub link_max: f64,
    pub cpu_min: f64,
    pub cpu_max: f64,
}

impl ScoreNormalization {
    pub fn over(helpers: &[&UserProfile], bottlenecks: &[&UserProfile]) -> Self {
        let mut link_min = f64::INFINITY;
        let mut link_max = f64::NEG_INFINITY;
        for h in helpers {
            for b in bottlenecks {
                let r = h.d2d_rate.min(b.d2d_rate);
                link_min = link_min.min(r);
                link_max = link_max.max(r);
            }
        }
        let cpu_min = helpers.iter().map(|h| h.cpu_rate).fold(f64::INFINITY, f64::min);
        let cpu_max = helpers.iter().map(|h| h.cpu_rate).fold(f64::NEG_INFINITY, f64::max);
        Self {
            link_min,
            link_max,
            cpu_min,
            cpu_max,
        }
    }
}

/// Degenerate ranges (all candidates equal) normalize to 1.
fn min_max(v: f64, lo: f64, hi: f64) -> f64 {
    if hi > lo {
        (v - lo) / (hi - lo)
    } else {
        1.0
    }
}

/// `α·min(dq_h, dq_b) + β·norm(link rate) + γ·norm(cpu_h)`.
pub fn initial_match_score(
    helper: &UserProfile,
    bottleneck: &UserProfile,
    norm: &ScoreNormalization,
    w: &ScoreWeights,
) -> f64 {
    let quality = helper.data_quality.min(bottleneck.data_quality);
    let link = helper.d2d_rate.min(bottleneck.d2d_rate);
    w.alpha * quality
        + w.beta * min_max(link, norm.link_min, norm.link_max)
        + w.gamma * min_max(helper.cpu_rate, norm.cpu_min, norm.cpu_max)
}

/// Scores for every `(efficient[i], bottleneck[j])`; `profiles` is indexed by user id.
pub fn score_matrix(
    profiles: &[UserProfile],
    efficient: &[usize],
    bottleneck: &[usize],
    w: &ScoreWeights,
) -> Vec<Vec<f64>> {
    let helpers: Vec<&UserProfile> = efficient.iter().map(|&u| &profiles[u]).collect();
    let slow: Vec<&UserProfile> = bottleneck.iter().map(|&u| &profiles[u]).collect();
    let norm = ScoreNormalization::over(&helpers, &slow);
    helpers
        .iter()
        .map(|h| slow.iter().map(|b| initial_match_score(h, b, &norm, w)).collect())
        .collect()
}

/// Higher score wins; ties go to the lower helper id, then the lower bottleneck id.
fn better(score: f64, pair: (usize, usize), best: Option<(f64, (usize, usize))>) -> bool {
    match best {
        None => true,
        Some((s, p)) => match score.total_cmp(&s) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => pair < p,
        },
    }
}

fn greedy_pairs(efficient: &[usize], bottleneck: &[usize], scores: &[Vec<f64>]) -> Vec<(usize, usize)> {
    assert_eq!(scores.len(), efficient.len(), "score rows must match efficient users");
    assert!(
        scores.iter().all(|r| r.len() == bottleneck.len()),
        "score columns must match bottleneck users"
    );
    let mut helper_free = vec![true; efficient.len()];
    let mut slow_free = vec![true; bottleneck.len()];
    let mut pairs = Vec::new();
    for _ in 0..efficient.len().min(bottleneck.len()) {
        let mut best: Option<(f64, (usize, usize))> = None;
        let mut best_idx = (0, 0);
        for (i, &h) in efficient.iter().enumerate().filter(|(i, _)| helper_free[*i]) {
            for (j, &b) in bottleneck.iter().enumerate().filter(|(j, _)| slow_free[*j]) {
                if better(scores[i][j], (h, b), best) {
                    best = Some((scores[i][j], (h, b)));
                    best_idx = (i, j);
                }
            }
        }
        let Some((_, pair)) = best else { break };
        helper_free[best_idx.0] = false;
        slow_free[best_idx.1] = false;
        pairs.push(pair);
    }
    pairs
}

fn build_plan(
    round_index: usize,
    source: MatchSource,
    efficient: &[usize],
    bottleneck: &[usize],
    pairs: Vec<(usize, usize)>,
    fallback: Vec<usize>,
) -> MatchPlan {
    let mut solo: Vec<usize> = efficient
        .iter()
        .chain(bottleneck)
        .copied()
        .filter(|u| !pairs.iter().any(|&(h, b)| h == *u || b == *u))
        .collect();
    solo.sort_unstable();
    MatchPlan {
        round_index,
        source,
        efficient: efficient.to_vec(),
        bottleneck: bottleneck.to_vec(),
        pairs,
        solo,
        fallback,
    }
}

/// Greedy one-to-one matching on `scores[helper][bottleneck]`; leftovers train solo.
pub fn greedy_match(
    efficient: &[usize],
    bottleneck: &[usize],
    scores: &[Vec<f64>],
    round_index: usize,
) -> MatchPlan {
    let pairs = greedy_pairs(efficient, bottleneck, scores);
    build_plan(
        round_index,
        MatchSource::InitialScore,
        efficient,
        bottleneck,
        pairs,
        Vec::new(),
    )
}

/// Greedy matching where closer gradients mean higher affinity.
pub fn match_by_distance(
    efficient: &[usize],
    bottleneck: &[usize],
    distances: &[Vec<f64>],
    round_index: usize,
) -> MatchPlan {
    let affinity: Vec<Vec<f64>> = distances
        .iter()
        .map(|row| row.iter().map(|d| -d).collect())
        .collect();
    let pairs = greedy_pairs(efficient, bottleneck, &affinity);
    build_plan(
        round_index,
        MatchSource::GradientSimilarity,
        efficient,
        bottleneck,
        pairs,
        Vec::new(),
    )
}

fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn gradient_distance(a: &[f64], b: &[f64], metric: RematchMetric) -> f64 {
    match metric {
        RematchMetric::NormOfDifference => {
            a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
        }
        RematchMetric::DifferenceOfNorms => (l2(a) - l2(b)).abs(),
    }
}

/// Re-pairs the previous plan's classes by gradient similarity.
///
/// `gradients` is indexed by user id and holds each user's flattened
/// client-side gradient from the previous round. Cells involving a user
/// without a usable gradient fall back to `fallback_scores` (the initial score
/// matrix, assumed in `[0, 1]`); both kinds of cell are then mapped onto
/// `[-1, 0]` so they can be compared, and the affected users are flagged.
pub fn gradient_rematch(
    previous: &MatchPlan,
    gradients: &[Option<Vec<f64>>],
    fallback_scores: &[Vec<f64>],
    metric: RematchMetric,
    round_index: usize,
) -> MatchPlan {
    let grad_of = |u: usize| -> Option<&Vec<f64>> { gradients.get(u).and_then(|g| g.as_ref()) };
    let efficient = &previous.efficient;
    let bottleneck = &previous.bottleneck;

    let mut missing: Vec<usize> = efficient
        .iter()
        .chain(bottleneck)
        .copied()
        .filter(|&u| grad_of(u).is_none())
        .collect();
    // a length mismatch also counts as unusable for both sides of the cell
    let mut distances: Vec<Vec<Option<f64>>> = Vec::with_capacity(efficient.len());
    for &h in efficient {
        let mut row = Vec::with_capacity(bottleneck.len());
        for &b in bottleneck {
            let cell = match (grad_of(h), grad_of(b)) {
                (Some(gh), Some(gb)) if gh.len() == gb.len() => {
                    Some(gradient_distance(gh, gb, metric))
                }
                (Some(_), Some(_)) => {
                    missing.extend([h, b]);
                    None
                }
                _ => None,
            };
            row.push(cell);
        }
        distances.push(row);
    }
    missing.sort_unstable();
    missing.dedup();

    let any_fallback = distances.iter().flatten().any(Option::is_none);
    let d_max = distances
        .iter()
        .flatten()
        .flatten()
        .fold(0.0f64, |m, &d| m.max(d));
    let affinity: Vec<Vec<f64>> = distances
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, cell)| match cell {
                    Some(d) if !any_fallback => -d,
                    Some(d) if d_max > 0.0 => -d / d_max,
                    Some(_) => 0.0,
                    None => fallback_scores[i][j] - 1.0,
                })
                .collect()
        })
        .collect();

    let pairs = greedy_pairs(efficient, bottleneck, &affinity);
    build_plan(
        round_index,
        MatchSource::GradientSimilarity,
        efficient,
        bottleneck,
        pairs,
        missing,
    )
}
