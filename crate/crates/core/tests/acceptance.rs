//! Acceptance checks, one PASS/FAIL line per criterion.

mod common;

use std::fs;
use std::process::ExitCode;

use csfl::cli::cmd_run;
use csfl::crom::{greedy_match, gradient_rematch, MatchSource, RematchMetric};
use csfl::model::{
    backward_range, column, forward_range, forward_range_cached, init_params, mse_loss_and_grad,
    LayerInput,
};
use csfl::sim::{prepare, run_experiment, run_round_csfl, run_round_sfl, Protocol, RoundContext, RoundTrace, SystemState};
use rand::Rng;

use common::{random_arch, random_batch, reference_config, rng};

const COMPOSITION_TOL: f64 = 1e-12;
const GRADIENT_REL_TOL: f64 = 1e-4;
const MAE_GAP_TOL: f64 = 0.15;
const RATIO_RANGE: (f64, f64) = (1.5, 2.5);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn relay_composition() -> Outcome {
    let mut worst = 0.0f64;
    for seed in 0..100u64 {
        let mut r = rng(1000 + seed);
        let arch = random_arch(&mut r);
        let params = init_params(&arch, seed).unwrap();
        let rows = r.random_range(1..=8);
        let raw = random_batch(&mut r, &arch, rows);
        let n = arch.total_layers();
        let s = r.random_range(1..n);
        let p = r.random_range(1..=s);
        let full = forward_range(&params, 1, n, LayerInput::Raw(&raw)).unwrap();
        let mut act = forward_range(&params, 1, p, LayerInput::Raw(&raw)).unwrap();
        if p < s {
            act = forward_range(&params, p + 1, s, LayerInput::Hidden(&act)).unwrap();
        }
        let out = forward_range(&params, s + 1, n, LayerInput::Hidden(&act)).unwrap();
        for (a, b) in out.values.iter().zip(full.values.iter()) {
            worst = worst.max((a - b).abs());
        }
    }
    outcome(worst <= COMPOSITION_TOL, format!("100 draws, max |diff| {worst:e} (tol {COMPOSITION_TOL:e})"))
}

fn gradient_check() -> Outcome {
    let mut worst = 0.0f64;
    let mut nets = 0;
    for seed in 0..12u64 {
        let mut r = rng(2000 + seed);
        let arch = random_arch(&mut r);
        let base = init_params(&arch, seed).unwrap();
        let flat: Vec<f64> = base.flatten().iter().map(|v| v + r.random_range(-0.3..0.3)).collect();
        let params = base.with_flat(&flat).unwrap();
        if params.num_params() > 200 {
            return outcome(false, format!("net {seed} has {} params", params.num_params()));
        }
        let raw = random_batch(&mut r, &arch, 4);
        let target = column(&(0..4).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<_>>());
        let n = arch.total_layers();
        let loss = |f: &[f64]| {
            let p = params.with_flat(f).unwrap();
            let out = forward_range(&p, 1, n, LayerInput::Raw(&raw)).unwrap();
            mse_loss_and_grad(&out.values, &target).unwrap().0
        };
        let (out, st) = forward_range_cached(&params, 1, n, LayerInput::Raw(&raw)).unwrap();
        let (_, g) = mse_loss_and_grad(&out.values, &target).unwrap();
        let analytic = backward_range(&params, 1, n, &st, &g).unwrap().flatten();
        let h = 1e-6;
        let numeric: Vec<f64> = (0..flat.len())
            .map(|i| {
                let (mut up, mut down) = (flat.clone(), flat.clone());
                up[i] += h;
                down[i] -= h;
                (loss(&up) - loss(&down)) / (2.0 * h)
            })
            .collect();
        let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
        let rel = norm(&diff) / (norm(&analytic) + norm(&numeric)).max(1e-12);
        worst = worst.max(rel);
        nets += 1;
    }
    outcome(
        nets >= 10 && worst < GRADIENT_REL_TOL,
        format!("{nets} nets, max relative error {worst:e} (tol {GRADIENT_REL_TOL:e})"),
    )
}

/// Strips the fields that only CSFL fills in.
fn comparable_state(s: &SystemState) -> SystemState {
    SystemState { plan: None, ..s.clone() }
}

fn comparable_trace(t: &RoundTrace) -> RoundTrace {
    RoundTrace { relay: None, ..t.clone() }
}

fn degeneracy() -> Outcome {
    let mut cfg = reference_config();
    for p in &mut cfg.spec.profiles {
        p.cpu_rate = 2e6;
    }
    let spec = &cfg.spec;
    let prepared = prepare(spec).unwrap();
    let ctx = RoundContext {
        dataset: &prepared.dataset,
        cost: &spec.cost,
        crom: &spec.crom,
        lr: spec.lr,
        batch_size: spec.batch_size,
        jitter: spec.jitter,
    };
    let mut sfl = prepared.initial_state(spec).unwrap();
    let mut csfl = sfl.clone();
    for round in 0..20 {
        let (ns, ts) = run_round_sfl(&sfl, &ctx).unwrap();
        let (nc, tc) = run_round_csfl(&csfl, &ctx).unwrap();
        if tc.relay.as_ref().is_some_and(|r| !r.plan.pairs.is_empty()) {
            return outcome(false, format!("round {round}: homogeneous users were paired"));
        }
        if comparable_state(&ns) != comparable_state(&nc) || comparable_trace(&ts) != comparable_trace(&tc) {
            return outcome(false, format!("round {round}: states or traces differ"));
        }
        sfl = ns;
        csfl = nc;
    }
    outcome(true, "20 rounds bit-identical (match plan and relay record excluded)")
}

fn mae_shape(out: &csfl::sim::ExperimentOutput) -> Outcome {
    let last = |p| out.report.last(p).unwrap().eval_mae;
    let (psl, sfl, csfl) = (last(Protocol::Psl), last(Protocol::Sfl), last(Protocol::CsflG));
    let gap = (csfl - sfl).abs() / sfl;
    outcome(
        psl > sfl && gap <= MAE_GAP_TOL,
        format!("eval MAE psl {psl:.5} sfl {sfl:.5} csfl-g {csfl:.5}, gap {gap:.4} (tol {MAE_GAP_TOL})"),
    )
}

fn throughput_shape(out: &csfl::sim::ExperimentOutput, aggregation_latency: f64) -> Outcome {
    let last = |p| out.report.last(p).unwrap().throughput;
    let (psl, sfl, csfl) = (last(Protocol::Psl), last(Protocol::Sfl), last(Protocol::CsflG));
    let ratio = csfl / sfl;
    outcome(
        (RATIO_RANGE.0..=RATIO_RANGE.1).contains(&ratio) && psl > sfl && aggregation_latency > 0.0,
        format!(
            "throughput psl {psl:.2} sfl {sfl:.2} csfl-g {csfl:.2}, ratio {ratio:.3} in [{}, {}]",
            RATIO_RANGE.0, RATIO_RANGE.1
        ),
    )
}

fn sync_reduction(out: &csfl::sim::ExperimentOutput) -> Outcome {
    let rounds = |p: Protocol| out.rounds.iter().filter(move |r| r.protocol == p).map(|r| &r.trace);
    let mut checked = 0;
    for (c, s) in rounds(Protocol::CsflG).zip(rounds(Protocol::Sfl)) {
        let matched = c.relay.as_ref().is_some_and(|r| !r.plan.pairs.is_empty());
        if !matched {
            if checked > 0 {
                return outcome(false, format!("round {} lost its pairs", c.round));
            }
            continue;
        }
        if !(c.sync_delay < s.sync_delay) {
            return outcome(
                false,
                format!("round {}: csfl-g {} >= sfl {}", c.round, c.sync_delay, s.sync_delay),
            );
        }
        checked += 1;
    }
    outcome(checked > 0, format!("{checked} matched rounds, csfl-g faster in each"))
}

/// Sort every cell by (score desc, helper, bottleneck) and take pairs whose ends are free.
fn sort_and_sweep(efficient: &[usize], bottleneck: &[usize], scores: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let mut cells = Vec::new();
    for (i, &h) in efficient.iter().enumerate() {
        for (j, &b) in bottleneck.iter().enumerate() {
            cells.push((scores[i][j], h, b));
        }
    }
    cells.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    let mut pairs: Vec<(usize, usize)> = Vec::new();
    for (_, h, b) in cells {
        if pairs.iter().all(|&(ph, pb)| ph != h && pb != b) {
            pairs.push((h, b));
        }
    }
    pairs
}

fn sorted(mut v: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    v.sort_unstable();
    v
}

fn matching_oracles() -> Outcome {
    let efficient: Vec<usize> = (0..5).collect();
    let bottleneck: Vec<usize> = (5..10).collect();
    for seed in 0..50u64 {
        let mut r = rng(3000 + seed);
        let coarse = seed % 2 == 1;
        let scores: Vec<Vec<f64>> = (0..5)
            .map(|_| {
                (0..5)
                    .map(|_| {
                        let v: f64 = r.random_range(0.0..1.0);
                        if coarse { (v * 4.0).round() / 4.0 } else { v }
                    })
                    .collect()
            })
            .collect();
        let plan = greedy_match(&efficient, &bottleneck, &scores, 0);
        if sorted(plan.pairs.clone()) != sorted(sort_and_sweep(&efficient, &bottleneck, &scores)) {
            return outcome(false, format!("seed {seed}: greedy differs from sort-and-sweep"));
        }

        let dim = 12;
        let mut grads: Vec<Option<Vec<f64>>> =
            (0..10).map(|_| Some((0..dim).map(|_| r.random_range(-1.0..1.0)).collect())).collect();
        let (h, b) = (r.random_range(0..5), r.random_range(5..10));
        grads[b] = grads[h].clone();
        for metric in [RematchMetric::NormOfDifference, RematchMetric::DifferenceOfNorms] {
            let re = gradient_rematch(&plan, &grads, &scores, metric, 1);
            if re.source != MatchSource::GradientSimilarity || !re.pairs.contains(&(h, b)) {
                return outcome(false, format!("seed {seed}: planted pair ({h}, {b}) not matched under {metric:?}"));
            }
        }
    }
    outcome(true, "50 seeds agree with sort-and-sweep; planted pair always matched")
}

fn determinism() -> Outcome {
    let cfg = reference_config();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fa = cmd_run(&cfg, a.path()).unwrap();
    let fb = cmd_run(&cfg, b.path()).unwrap();
    let same = |x: &std::path::Path, y: &std::path::Path| fs::read(x).unwrap() == fs::read(y).unwrap();
    let (m, t) = (same(&fa.metrics, &fb.metrics), same(&fa.trace, &fb.trace));
    outcome(m && t, format!("metrics.csv identical: {m}, trace.json identical: {t}"))
}

fn main() -> ExitCode {
    let reference = reference_config();
    let out = run_experiment(&reference.spec).expect("reference experiment");
    let results = [
        ("1 relay composition", relay_composition()),
        ("2 gradient check", gradient_check()),
        ("3 degeneracy", degeneracy()),
        ("4 mae shape", mae_shape(&out)),
        ("5 throughput shape", throughput_shape(&out, reference.spec.cost.aggregation_latency)),
        ("6 sync reduction", sync_reduction(&out)),
        ("7 matching oracles", matching_oracles()),
        ("8 determinism", determinism()),
    ];
    let mut all = true;
    for (name, o) in &results {
        println!("{} criterion {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        all &= o.pass;
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
