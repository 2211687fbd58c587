use rand::Rng;
use serde::{Deserialize, Serialize};

use super::schedule::{Resource, TaskGraph, TaskId};
use super::{fedavg, Protocol, SystemState};
use crate::crom::{
    classify_users, gradient_rematch, greedy_match, pair_link, plan_relays, score_matrix,
    CromConfig, Demotion, MatchPlan, PartitionDecision,
};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{
    backward_range, column, forward_range_cached, mse_loss_and_grad, sgd_step, ArchSpec,
    GradientBundle, LayerInput, SplitModelParams,
};
use crate::system::{activation_bytes, compute_time, transfer_time, CostModel, UserProfile};

/// Read-only inputs shared by every round of an experiment.
#[derive(Debug, Clone, Copy)]
pub struct RoundContext<'a> {
    pub dataset: &'a Dataset,
    pub cost: &'a CostModel,
    pub crom: &'a CromConfig,
    pub lr: f64,
    pub batch_size: usize,
    /// Half-width of the per-round multiplicative jitter on link rates; 0 disables it.
    pub jitter: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    Stage1Start,
    Stage1End,
    HandoffSend,
    RelayStart,
    RelayEnd,
    SmashedUpload,
    ServerCompute,
    GradReturn,
    ClientBackwardEnd,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub kind: EventKind,
    pub time: f64,
}

/// Events along the path of one user's batch, in time order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserTimeline {
    pub user: usize,
    pub events: Vec<Event>,
    pub completion: f64,
}

impl UserTimeline {
    pub fn time_of(&self, kind: EventKind) -> Option<f64> {
        self.events.iter().find(|e| e.kind == kind).map(|e| e.time)
    }
}

/// Matching and relay arrangement used by a collaborative round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelayRecord {
    pub plan: MatchPlan,
    pub decisions: Vec<PartitionDecision>,
    pub demotions: Vec<Demotion>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round: usize,
    pub users: Vec<UserTimeline>,
    /// Slowest completion plus aggregation latency when the round aggregates.
    pub sync_delay: f64,
    pub samples_processed: usize,
    pub aggregations: usize,
    /// Sum of `|prediction − target|` over the round's training samples.
    pub train_abs_error: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub relay: Option<RelayRecord>,
}

/// How a user's batch travels through the client-side layers.
#[derive(Debug, Clone, PartialEq)]
pub enum Route {
    Solo,
    /// Layers `1..=p` on the user's device, `p+1..=s` on the helper.
    Relayed(PartitionDecision),
}

/// Hook invoked for each bottleneck while its helper works on its batch.
pub trait AuxiliaryTask {
    fn while_assisted(&mut self, _bottleneck: usize, _idle_from: f64, _idle_to: f64) {}
}

#[derive(Debug, Clone, Copy, Default)]
pub struct NoAuxiliary;

impl AuxiliaryTask for NoAuxiliary {}

pub fn run_round_psl(state: &SystemState, ctx: &RoundContext<'_>) -> Result<(SystemState, RoundTrace)> {
    run_round(state, ctx, Protocol::Psl, &mut NoAuxiliary)
}

pub fn run_round_sfl(state: &SystemState, ctx: &RoundContext<'_>) -> Result<(SystemState, RoundTrace)> {
    run_round(state, ctx, Protocol::Sfl, &mut NoAuxiliary)
}

pub fn run_round_csfl(state: &SystemState, ctx: &RoundContext<'_>) -> Result<(SystemState, RoundTrace)> {
    run_round(state, ctx, Protocol::CsflG, &mut NoAuxiliary)
}

pub fn run_round_csfl_with(
    state: &SystemState,
    ctx: &RoundContext<'_>,
    aux: &mut dyn AuxiliaryTask,
) -> Result<(SystemState, RoundTrace)> {
    run_round(state, ctx, Protocol::CsflG, aux)
}

/// One mini-batch step for every user under `protocol`.
pub fn run_round(
    state: &SystemState,
    ctx: &RoundContext<'_>,
    protocol: Protocol,
    aux: &mut dyn AuxiliaryTask,
) -> Result<(SystemState, RoundTrace)> {
    if ctx.batch_size == 0 {
        return Err(Error::config("batch_size must be >= 1"));
    }
    let mut next = state.clone();
    let profiles = jittered_profiles(&mut next, ctx.jitter)?;
    let batch = state.batch_indices(0, ctx.batch_size).len();

    let (routes, relay) = if protocol == Protocol::CsflG {
        let plan = match_users(state, ctx)?;
        let schedule = plan_relays(&plan, &profiles, &state.arch, ctx.cost, ctx.crom, batch)?;
        let mut routes = vec![Route::Solo; state.num_users()];
        for d in &schedule.decisions {
            if d.relays(state.arch.split_layer) {
                routes[d.bottleneck_id] = Route::Relayed(d.clone());
            }
        }
        next.plan = Some(schedule.plan.clone());
        let record = RelayRecord {
            plan: schedule.plan,
            decisions: schedule.decisions,
            demotions: schedule.demotions,
        };
        (routes, Some(record))
    } else {
        (vec![Route::Solo; state.num_users()], None)
    };

    let outcome = train(state, ctx, &routes)?;
    let aggregate = protocol.aggregates();
    let (users, sync_delay) = round_timeline(&state.arch, ctx.cost, &profiles, &routes, batch, aggregate)?;

    for (u, route) in routes.iter().enumerate() {
        if let Route::Relayed(_) = route {
            let t = &users[u];
            let from = t.time_of(EventKind::HandoffSend).unwrap_or(0.0);
            let to = t.time_of(EventKind::GradReturn).unwrap_or(from);
            aux.while_assisted(u, from, to);
        }
    }

    next.clients = if aggregate {
        let weights: Vec<f64> = state.shards.iter().map(|s| s.len() as f64).collect();
        let avg = fedavg(&outcome.clients, &weights)?;
        vec![avg; state.num_users()]
    } else {
        outcome.clients
    };
    next.server = outcome.server;
    next.last_gradients = outcome.gradients;
    next.round += 1;

    let trace = RoundTrace {
        round: state.round,
        users,
        sync_delay,
        samples_processed: batch * state.num_users(),
        aggregations: usize::from(aggregate),
        train_abs_error: outcome.abs_error,
        relay,
    };
    Ok((next, trace))
}

fn jittered_profiles(state: &mut SystemState, jitter: f64) -> Result<Vec<UserProfile>> {
    if !(0.0..1.0).contains(&jitter) {
        return Err(Error::config(format!("jitter must lie in [0, 1), got {jitter}")));
    }
    let mut profiles = state.profiles.clone();
    if jitter > 0.0 {
        for p in &mut profiles {
            p.uplink_rate *= state.jitter_rng.random_range(1.0 - jitter..=1.0 + jitter);
            p.d2d_rate *= state.jitter_rng.random_range(1.0 - jitter..=1.0 + jitter);
        }
    }
    Ok(profiles)
}

/// Initial score matching before the re-match round, gradient similarity afterwards.
fn match_users(state: &SystemState, ctx: &RoundContext<'_>) -> Result<MatchPlan> {
    let weights = &ctx.crom.weights;
    match &state.plan {
        Some(prev) if state.round >= ctx.crom.rematch_round => {
            let scores = score_matrix(&state.profiles, &prev.efficient, &prev.bottleneck, weights);
            Ok(gradient_rematch(
                prev,
                &state.last_gradients,
                &scores,
                ctx.crom.rematch_metric,
                state.round,
            ))
        }
        _ => {
            let classes = classify_users(&state.profiles, &state.arch, ctx.batch_size)?;
            let scores = score_matrix(&state.profiles, &classes.efficient, &classes.bottleneck, weights);
            Ok(greedy_match(&classes.efficient, &classes.bottleneck, &scores, state.round))
        }
    }
}

struct TrainOutcome {
    clients: Vec<SplitModelParams>,
    server: SplitModelParams,
    gradients: Vec<Option<Vec<f64>>>,
    abs_error: f64,
}

fn for_user(user: usize) -> impl Fn(Error) -> Error {
    move |e| match e {
        Error::Numeric(message) => Error::Round { user, message },
        other => other,
    }
}

/// Forward and backward passes for every user at the round-start parameters,
/// then one SGD step per gradient bundle.
fn train(state: &SystemState, ctx: &RoundContext<'_>, routes: &[Route]) -> Result<TrainOutcome> {
    let s = state.arch.split_layer;
    let n = state.arch.total_layers();
    let users = state.num_users();
    let mut updates: Vec<Vec<GradientBundle>> = vec![Vec::new(); users];
    let mut server_grads = Vec::with_capacity(users);
    let mut server_weights = Vec::with_capacity(users);
    let mut gradients = vec![None; users];
    let mut abs_error = 0.0;

    for (u, route) in routes.iter().enumerate() {
        let wrap = for_user(u);
        let idx = state.batch_indices(u, ctx.batch_size);
        let raw = ctx.dataset.batch(idx);
        let target = column(&ctx.dataset.targets(idx));
        let own = &state.clients[u];

        let relay = match route {
            Route::Solo => None,
            Route::Relayed(d) => {
                let p = d.partition_point;
                let holder = if ctx.crom.ship_weights { u } else { d.helper_id };
                Some((p, holder))
            }
        };

        let (smashed, head_state, tail) = match relay {
            None => {
                let (act, st) = forward_range_cached(own, 1, s, LayerInput::Raw(&raw)).map_err(&wrap)?;
                (act, st, None)
            }
            Some((p, holder)) => {
                let (mid, st1) = forward_range_cached(own, 1, p, LayerInput::Raw(&raw)).map_err(&wrap)?;
                let relay_params = &state.clients[holder];
                let (act, st2) =
                    forward_range_cached(relay_params, p + 1, s, LayerInput::Hidden(&mid)).map_err(&wrap)?;
                (act, st1, Some((p, holder, st2)))
            }
        };

        let (pred, server_state) =
            forward_range_cached(&state.server, s + 1, n, LayerInput::Hidden(&smashed)).map_err(&wrap)?;
        let (loss, grad) = mse_loss_and_grad(&pred.values, &target)?;
        if !loss.is_finite() {
            return Err(Error::Round {
                user: u,
                message: format!("loss became {loss}"),
            });
        }
        abs_error += pred
            .values
            .iter()
            .zip(target.iter())
            .map(|(p, t)| (p - t).abs())
            .sum::<f64>();

        let sg = backward_range(&state.server, s + 1, n, &server_state, &grad).map_err(&wrap)?;
        let upstream = sg
            .input_gradient
            .clone()
            .ok_or_else(|| Error::contract("server pass returned no input gradient"))?;
        server_grads.push(sg.params);
        server_weights.push(idx.len() as f64);

        match tail {
            None => {
                let cg = backward_range(own, 1, s, &head_state, &upstream).map_err(&wrap)?;
                gradients[u] = Some(cg.flatten());
                updates[u].push(cg);
            }
            Some((p, holder, relay_state)) => {
                let rg = backward_range(&state.clients[holder], p + 1, s, &relay_state, &upstream)
                    .map_err(&wrap)?;
                let down = rg
                    .input_gradient
                    .as_ref()
                    .ok_or_else(|| Error::contract("relay pass returned no input gradient"))?;
                let bg = backward_range(own, 1, p, &head_state, down).map_err(&wrap)?;
                let mut flat = bg.flatten();
                flat.extend(rg.flatten());
                gradients[u] = Some(flat);
                updates[u].push(bg);
                updates[holder].push(rg);
            }
        }
    }

    let mut clients = Vec::with_capacity(users);
    for (u, bundles) in updates.iter().enumerate() {
        let mut params = state.clients[u].clone();
        for g in bundles {
            params = sgd_step(&params, g, ctx.lr)?;
        }
        clients.push(params);
    }
    let server_grad = GradientBundle {
        params: fedavg(&server_grads, &server_weights)?,
        input_gradient: None,
    };
    let server = sgd_step(&state.server, &server_grad, ctx.lr)?;
    Ok(TrainOutcome {
        clients,
        server,
        gradients,
        abs_error,
    })
}

struct Marks {
    user: usize,
    marks: Vec<(EventKind, TaskId, bool)>,
}

impl Marks {
    fn new(user: usize) -> Self {
        Self {
            user,
            marks: Vec::new(),
        }
    }

    fn start(&mut self, kind: EventKind, task: TaskId) {
        self.marks.push((kind, task, true));
    }

    fn end(&mut self, kind: EventKind, task: TaskId) {
        self.marks.push((kind, task, false));
    }
}

/// Simulated timing of one round.
///
/// Builds the task graph of every user's forward, upload, server, download and
/// backward steps (plus the D2D handoff and helper relay for relayed users) and
/// runs it through the list scheduler. Returns per-user timelines and the
/// round's sync delay.
pub fn round_timeline(
    arch: &ArchSpec,
    cost: &CostModel,
    profiles: &[UserProfile],
    routes: &[Route],
    batch: usize,
    aggregate: bool,
) -> Result<(Vec<UserTimeline>, f64)> {
    if routes.len() != profiles.len() {
        return Err(Error::contract("one route per user is required"));
    }
    let s = arch.split_layer;
    let bpe = cost.bytes_per_element;
    let smashed = activation_bytes(arch, s, batch, bpe)?;
    let server_time = cost.server_time(arch, batch)?;
    let bwd = cost.backward_factor;
    let link = |u: usize| transfer_time(smashed, profiles[u].uplink_rate, profiles[u].link_latency);

    let mut g = TaskGraph::new();
    let mut marks: Vec<Marks> = (0..profiles.len()).map(Marks::new).collect();
    let mut own_forward = vec![None; profiles.len()];
    let mut head = vec![None; profiles.len()];

    for (u, route) in routes.iter().enumerate() {
        let prof = &profiles[u];
        let m = &mut marks[u];
        match route {
            Route::Solo => {
                let fwd_time = compute_time(prof, arch, 1, s, batch)?;
                let fwd = g.add(Resource::Cpu(u), fwd_time, &[]);
                let up = g.add(Resource::Uplink(u), link(u)?, &[fwd]);
                let srv = g.add(Resource::Server, server_time, &[up]);
                let down = g.add(Resource::Downlink(u), link(u)?, &[srv]);
                let back = g.add(Resource::Cpu(u), bwd * fwd_time, &[down]);
                m.start(EventKind::Stage1Start, fwd);
                m.end(EventKind::Stage1End, fwd);
                m.end(EventKind::SmashedUpload, up);
                m.end(EventKind::ServerCompute, srv);
                m.end(EventKind::GradReturn, down);
                m.end(EventKind::ClientBackwardEnd, back);
                own_forward[u] = Some(fwd);
            }
            Route::Relayed(d) => {
                if d.bottleneck_id != u || d.partition_point >= s || d.partition_point == 0 {
                    return Err(Error::contract(format!("relay decision does not fit user {u}")));
                }
                let t = compute_time(prof, arch, 1, d.partition_point, batch)?;
                let fwd = g.add(Resource::Cpu(u), t, &[]);
                m.start(EventKind::Stage1Start, fwd);
                m.end(EventKind::Stage1End, fwd);
                head[u] = Some((fwd, t));
            }
        }
    }

    for (b, route) in routes.iter().enumerate() {
        let Route::Relayed(d) = route else { continue };
        let h = d.helper_id;
        let p = d.partition_point;
        let (Some(helper_fwd), Some((b_fwd, b_fwd_time))) = (own_forward.get(h).copied().flatten(), head[b])
        else {
            return Err(Error::contract(format!("helper {h} of user {b} is not running solo")));
        };
        let (hp, bp) = (&profiles[h], &profiles[b]);
        let (rate, latency) = pair_link(hp, bp);
        let d2d = Resource::d2d(h, b);
        let relay_time = compute_time(hp, arch, p + 1, s, batch)?;
        let grad_bytes = activation_bytes(arch, p, batch, bpe)? + d.shipped_weight_bytes;

        let handoff = g.add(d2d, transfer_time(d.handoff_bytes(), rate, latency)?, &[b_fwd, helper_fwd]);
        let relay = g.add(Resource::Cpu(h), relay_time, &[handoff]);
        let up = g.add(Resource::Uplink(h), link(h)?, &[relay]);
        let srv = g.add(Resource::Server, server_time, &[up]);
        let down = g.add(Resource::Downlink(h), link(h)?, &[srv]);
        let relay_back = g.add(Resource::Cpu(h), bwd * relay_time, &[down]);
        let grad_back = g.add(d2d, transfer_time(grad_bytes, rate, latency)?, &[relay_back]);
        let back = g.add(Resource::Cpu(b), bwd * b_fwd_time, &[grad_back]);

        let m = &mut marks[b];
        m.start(EventKind::HandoffSend, handoff);
        m.start(EventKind::RelayStart, relay);
        m.end(EventKind::RelayEnd, relay);
        m.end(EventKind::SmashedUpload, up);
        m.end(EventKind::ServerCompute, srv);
        m.end(EventKind::GradReturn, grad_back);
        m.end(EventKind::ClientBackwardEnd, back);
    }

    let slots = g.run();
    let timelines: Vec<UserTimeline> = marks
        .into_iter()
        .map(|m| {
            let mut events: Vec<Event> = m
                .marks
                .iter()
                .map(|&(kind, task, is_start)| Event {
                    kind,
                    time: if is_start { slots[task].start } else { slots[task].end },
                })
                .collect();
            events.sort_by(|a, b| a.time.total_cmp(&b.time));
            let completion = events.iter().map(|e| e.time).fold(0.0, f64::max);
            UserTimeline {
                user: m.user,
                events,
                completion,
            }
        })
        .collect();
    let slowest = timelines.iter().map(|t| t.completion).fold(0.0, f64::max);
    let sync_delay = if aggregate {
        slowest + cost.aggregation_latency
    } else {
        slowest
    };
    Ok((timelines, sync_delay))
}
