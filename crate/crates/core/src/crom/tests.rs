use proptest::prelude::*;

use super::*;
use crate::model::ArchSpec;
use crate::system::{CostModel, UserProfile};

fn profile(user_id: usize, cpu_rate: f64) -> UserProfile {
    UserProfile {
        user_id,
        cpu_rate,
        data_quality: 1.0,
        uplink_rate: 1e7,
        d2d_rate: 2e7,
        link_latency: 0.002,
    }
}

fn arch() -> ArchSpec {
    ArchSpec::wide_and_deep(6, 2, 3)
}

/// Sort every cell by (score desc, helper, bottleneck) and sweep.
fn sweep_oracle(eff: &[usize], bot: &[usize], scores: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let mut cells = Vec::new();
    for (i, &h) in eff.iter().enumerate() {
        for (j, &b) in bot.iter().enumerate() {
            cells.push((scores[i][j], h, b));
        }
    }
    cells.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut used = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for (_, h, b) in cells {
        if !used.contains(&h) && !used.contains(&b) {
            used.insert(h);
            used.insert(b);
            out.push((h, b));
        }
    }
    out
}

#[test]
fn classify_fast_and_slow() {
    let profiles: Vec<_> = (0..6)
        .map(|u| profile(u, if u % 2 == 0 { 2e9 } else { 5e8 }))
        .collect();
    let c = classify_users(&profiles, &arch(), 32).unwrap();
    assert_eq!(c.efficient, vec![0, 2, 4]);
    assert_eq!(c.bottleneck, vec![1, 3, 5]);
}

#[test]
fn classify_identical_and_single() {
    let profiles: Vec<_> = (0..4).map(|u| profile(u, 1e9)).collect();
    let c = classify_users(&profiles, &arch(), 32).unwrap();
    assert_eq!(c.efficient, vec![0, 1, 2, 3]);
    assert!(c.bottleneck.is_empty());
    let c = classify_users(&profiles[..1], &arch(), 32).unwrap();
    assert_eq!(c.efficient, vec![0]);
    assert!(c.bottleneck.is_empty());
}

#[test]
fn identical_candidates_score_equally() {
    let profiles: Vec<_> = (0..4).map(|u| profile(u, 1e9)).collect();
    let m = score_matrix(&profiles, &[0, 1], &[2, 3], &ScoreWeights::default());
    assert_eq!(m[0][0], m[0][1]);
    assert_eq!(m[0][0], m[1][0]);
    assert_eq!(m[1][1], m[0][0]);
}

#[test]
fn maximal_helper_scores_higher() {
    let mut strong = profile(0, 4e9);
    strong.d2d_rate = 1e8;
    let mut weak = profile(1, 1e9);
    weak.d2d_rate = 1e6;
    weak.data_quality = 0.2;
    let slow = profile(2, 1e8);
    let profiles = vec![strong, weak, slow];
    let m = score_matrix(&profiles, &[0, 1], &[2], &ScoreWeights::default());
    assert!(m[0][0] > m[1][0]);
}

#[test]
fn score_matrix_matches_formula() {
    // seeded-style fixed table: (cpu, d2d, quality)
    let table = [
        (3.0e9, 5.0e7, 0.9),
        (2.0e9, 2.0e7, 0.6),
        (2.5e9, 8.0e7, 0.8),
        (5.0e8, 4.0e7, 0.7),
        (4.0e8, 1.0e7, 0.95),
        (6.0e8, 6.0e7, 0.5),
    ];
    let profiles: Vec<_> = table
        .iter()
        .enumerate()
        .map(|(u, &(cpu, d2d, q))| UserProfile {
            d2d_rate: d2d,
            data_quality: q,
            ..profile(u, cpu)
        })
        .collect();
    let w = ScoreWeights {
        alpha: 0.5,
        beta: 0.3,
        gamma: 0.2,
    };
    let m = score_matrix(&profiles, &[0, 1, 2], &[3, 4, 5], &w);
    // link rates are min(d2d_h, d2d_b): range over the 9 cells is [1e7, 6e7]
    let (lmin, lmax) = (1.0e7, 6.0e7);
    let (cmin, cmax) = (2.0e9, 3.0e9);
    for (i, h) in [0usize, 1, 2].iter().enumerate() {
        for (j, b) in [3usize, 4, 5].iter().enumerate() {
            let (hc, hd, hq) = table[*h];
            let (_, bd, bq) = table[*b];
            let link = hd.min(bd);
            let expected =
                0.5 * hq.min(bq) + 0.3 * (link - lmin) / (lmax - lmin) + 0.2 * (hc - cmin) / (cmax - cmin);
            assert!((m[i][j] - expected).abs() < 1e-15, "cell {i},{j}");
        }
    }
}

#[test]
fn greedy_examples() {
    let plan = greedy_match(&[0, 1], &[], &[vec![], vec![]], 0);
    assert!(plan.pairs.is_empty());
    assert_eq!(plan.solo, vec![0, 1]);

    let plan = greedy_match(&[0, 1], &[2, 3], &[vec![5.0, 1.0], vec![2.0, 4.0]], 0);
    assert_eq!(plan.pairs, vec![(0, 2), (1, 3)]);

    let plan = greedy_match(&[0, 1], &[2, 3], &[vec![1.0, 1.0], vec![1.0, 1.0]], 0);
    assert_eq!(plan.pairs, vec![(0, 2), (1, 3)]);
    assert!(plan.solo.is_empty());
}

#[test]
fn greedy_imbalance_leaves_solo() {
    let plan = greedy_match(&[0], &[1, 2, 3], &[vec![0.1, 0.9, 0.5]], 3);
    assert_eq!(plan.pairs, vec![(0, 2)]);
    assert_eq!(plan.solo, vec![1, 3]);
    assert_eq!(plan.round_index, 3);
    assert!(plan.is_matching());
}

#[test]
fn rematch_prefers_identical_gradients() {
    let prev = greedy_match(&[0, 1], &[2, 3], &[vec![1.0, 0.0], vec![0.0, 1.0]], 4);
    let grads = vec![
        Some(vec![1.0, 1.0]),
        Some(vec![-5.0, 2.0]),
        Some(vec![9.0, 9.0]),
        Some(vec![-5.0, 2.0]),
    ];
    let plan = gradient_rematch(&prev, &grads, &vec![vec![0.5; 2]; 2], RematchMetric::NormOfDifference, 5);
    assert!(plan.pairs.contains(&(1, 3)));
    assert_eq!(plan.pairs[0], (1, 3));
    assert_eq!(plan.source, MatchSource::GradientSimilarity);
    assert!(plan.fallback.is_empty());
}

#[test]
fn rematch_distance_example() {
    let plan = match_by_distance(&[0, 1], &[2, 3], &[vec![0.1, 3.0], vec![3.0, 0.2]], 5);
    assert_eq!(plan.pairs, vec![(0, 2), (1, 3)]);
    // brute-force min-sum: 0.1 + 0.2 < 3 + 3
}

#[test]
fn rematch_identical_gradients_fall_back_to_ids() {
    let prev = greedy_match(&[0, 1], &[2, 3], &[vec![0.0, 1.0], vec![1.0, 0.0]], 0);
    let g = Some(vec![0.3, -0.2, 0.7]);
    let grads = vec![g.clone(), g.clone(), g.clone(), g];
    let plan = gradient_rematch(&prev, &grads, &vec![vec![0.0; 2]; 2], RematchMetric::NormOfDifference, 6);
    assert_eq!(plan.pairs, vec![(0, 2), (1, 3)]);
}

#[test]
fn rematch_missing_gradient_uses_initial_scores() {
    let prev = greedy_match(&[0, 1], &[2, 3], &[vec![0.0, 1.0], vec![1.0, 0.0]], 0);
    let grads = vec![Some(vec![1.0]), Some(vec![1.0]), None, Some(vec![1.0])];
    let scores = vec![vec![0.9, 0.1], vec![0.2, 0.3]];
    let plan = gradient_rematch(&prev, &grads, &scores, RematchMetric::NormOfDifference, 5);
    assert_eq!(plan.fallback, vec![2]);
    assert!(plan.is_matching());
    assert_eq!(plan.pairs.len(), 2);
}

#[test]
fn difference_of_norms_metric() {
    let d = gradient_distance(&[3.0, 4.0], &[0.0, 5.0], RematchMetric::DifferenceOfNorms);
    assert_eq!(d, 0.0);
    let d = gradient_distance(&[3.0, 4.0], &[0.0, 5.0], RematchMetric::NormOfDifference);
    assert!((d - 10f64.sqrt()).abs() < 1e-15);
}

#[test]
fn partition_examples() {
    assert_eq!(partition_from_times(1.0, &[0.4, 0.4, 0.4]), 2);
    assert_eq!(partition_from_times(5.0, &[0.4, 0.4, 0.4]), 3);
    assert_eq!(partition_from_times(0.1, &[0.4, 0.4, 0.4]), 1);
}

#[test]
fn partition_decision_fields() {
    let a = arch();
    let cost = CostModel::default();
    let fast = profile(0, 4e6);
    let slow = profile(1, 1e6);
    let d = determine_partition_point(&fast, &slow, &a, &cost, 32, false).unwrap();
    assert!(d.partition_point >= 1 && d.partition_point <= a.split_layer);
    assert!(d.partition_point < a.split_layer);
    let t_h = crate::system::compute_time(&fast, &a, 1, a.split_layer, 32).unwrap();
    let t_b = crate::system::compute_time(&slow, &a, 1, d.partition_point, 32).unwrap();
    assert_eq!(d.handoff_time, t_h.max(t_b));
    assert_eq!(
        d.intermediate_bytes,
        crate::system::activation_bytes(&a, d.partition_point, 32, 8).unwrap()
    );
    assert_eq!(d.shipped_weight_bytes, 0);
    let shipped = determine_partition_point(&fast, &slow, &a, &cost, 32, true).unwrap();
    assert!(shipped.shipped_weight_bytes > 0);

    // a slower helper than the bottleneck: nothing to relay
    let d = determine_partition_point(&slow, &fast, &a, &cost, 32, false).unwrap();
    assert_eq!(d.partition_point, a.split_layer);
}

#[test]
fn plan_relays_demotes_on_timeout_and_budget() {
    let a = arch();
    let cost = CostModel::default();
    let profiles = vec![profile(0, 4e6), profile(1, 1e6)];
    let plan = greedy_match(&[0], &[1], &[vec![1.0]], 0);

    let ok = plan_relays(&plan, &profiles, &a, &cost, &CromConfig::default(), 32).unwrap();
    assert_eq!(ok.plan.pairs, vec![(0, 1)]);
    assert!(ok.relay_for(1, a.split_layer).is_some());

    let cfg = CromConfig {
        d2d_timeout: 1e-9,
        ..CromConfig::default()
    };
    let timed_out = plan_relays(&plan, &profiles, &a, &cost, &cfg, 32).unwrap();
    assert!(timed_out.plan.pairs.is_empty());
    assert_eq!(timed_out.plan.solo, vec![0, 1]);
    assert_eq!(timed_out.demotions[0].reason, DemotionReason::D2dTimeout);

    let cfg = CromConfig {
        helper_budget: 0.01,
        ..CromConfig::default()
    };
    let busy = plan_relays(&plan, &profiles, &a, &cost, &cfg, 32).unwrap();
    assert_eq!(busy.demotions[0].reason, DemotionReason::HelperBudget);
}

proptest! {
    #[test]
    fn greedy_equals_sweep_oracle(
        nh in 0usize..6, nb in 0usize..6,
        raw in proptest::collection::vec(0u8..4, 25),
    ) {
        let eff: Vec<usize> = (0..nh).collect();
        let bot: Vec<usize> = (nh..nh + nb).collect();
        // coarse values force plenty of ties
        let scores: Vec<Vec<f64>> = (0..nh)
            .map(|i| (0..nb).map(|j| raw[i * 5 + j] as f64 * 0.5).collect())
            .collect();
        let plan = greedy_match(&eff, &bot, &scores, 0);
        prop_assert!(plan.is_matching());
        prop_assert_eq!(plan.pairs.len(), nh.min(nb));
        prop_assert_eq!(plan.pairs, sweep_oracle(&eff, &bot, &scores));
        prop_assert_eq!(plan.solo.len() + 2 * nh.min(nb), nh + nb);
    }

    /// p is non-decreasing in the helper's stage-1 time relative to the bottleneck.
    #[test]
    fn partition_monotone_in_helper_time(
        slow in 1e5f64..1e7, fast in 1e5f64..1e8, factor in 1.0f64..8.0, batch in 1usize..64,
    ) {
        let a = arch();
        let cost = CostModel::default();
        let b = profile(1, slow);
        let h1 = profile(0, fast);
        let h2 = profile(0, fast * factor);
        let p1 = determine_partition_point(&h1, &b, &a, &cost, batch, false).unwrap().partition_point;
        let p2 = determine_partition_point(&h2, &b, &a, &cost, batch, false).unwrap().partition_point;
        prop_assert!(p1 >= 1 && p1 <= a.split_layer);
        // h2 has the smaller T_h
        prop_assert!(p2 <= p1);
        let quicker_bottleneck = profile(1, slow * factor);
        let p3 = determine_partition_point(&h1, &quicker_bottleneck, &a, &cost, batch, false)
            .unwrap()
            .partition_point;
        prop_assert!(p3 >= p1);
    }
}
