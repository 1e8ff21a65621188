//! Lock-step orchestration of one replica: query every player, resolve the
//! round, deliver observations, accumulate metrics and ground-truth
//! diagnostics (good event, collision counts, regret decomposition).

use crate::config::{Mode, RunConfig, StopRule};
use crate::connectivity::ArmStats;
use crate::env::{resolve_round_into, BanditInstance, RoundRecord};
use crate::player::{PlayerState, ProtocolEvent, SampleRoute};
use crate::rng::Rng;
use crate::schedule::{boundary_thresholds, conf_log, ConfidenceParams};
use serde::Serialize;
use std::collections::BTreeMap;

/// Per-round phase tag of the whole system.
pub const ROUND_TAG_RR: &str = "round_robin";
pub const ROUND_TAG_COLLISION: &str = "collision";
pub const ROUND_TAG_EXPLOIT: &str = "exploit";

const EVENT_LOG_CAP: usize = 100_000;

#[derive(Debug, Clone, PartialEq)]
pub enum RunError {
    ArmCountMismatch { config: u32, instance: usize },
    ZeroModeNeedsZeroCollision(f64),
    BadParams(String),
    ZeroHorizon,
}

impl std::fmt::Display for RunError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RunError::ArmCountMismatch { config, instance } => {
                write!(f, "config says {config} arms but the instance has {instance}")
            }
            RunError::ZeroModeNeedsZeroCollision(c) => {
                write!(f, "zero mode requires collision mean 0, got {c}")
            }
            RunError::BadParams(e) => write!(f, "invalid parameters: {e}"),
            RunError::ZeroHorizon => write!(f, "horizon must be at least 1"),
        }
    }
}

impl std::error::Error for RunError {}

#[derive(Debug, Clone, Serialize)]
pub struct GridPoint {
    pub round: u64,
    pub cum_regret: f64,
    pub cum_regret_collision_aware: f64,
    pub cum_collisions: u64,
    pub phase_tag: &'static str,
    pub event: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct RegretDecomposition {
    pub round_robin: f64,
    pub collision: f64,
    pub exploit: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlayerSummary {
    pub player: usize,
    pub phase: &'static str,
    pub epoch: u32,
    pub arm_set: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunMetrics {
    pub seed: u64,
    pub rounds_ran: u64,
    pub cum_regret: f64,
    pub cum_regret_collision_aware: f64,
    pub collisions_total: u64,
    pub collisions_estimate_phase: u64,
    /// Collisions in rounds where no player was deliberately deviating from
    /// a collision-free schedule. Must stay 0.
    pub rr_collision_violations: u64,
    pub good_event_held: bool,
    pub exploit_all_round: Option<u64>,
    pub regret_at_exploit_all: f64,
    pub decomposition: RegretDecomposition,
    pub phase_rounds: BTreeMap<&'static str, u64>,
    pub samples: Vec<GridPoint>,
    #[serde(skip)]
    pub events: Vec<(u64, ProtocolEvent)>,
    pub events_truncated: bool,
    pub final_players: Vec<PlayerSummary>,
}

/// Streaming consumer of the round records.
pub trait RecordSink {
    fn on_round(&mut self, rec: &RoundRecord);
}

pub struct NullSink;

impl RecordSink for NullSink {
    fn on_round(&mut self, _rec: &RoundRecord) {}
}

impl RecordSink for Vec<RoundRecord> {
    fn on_round(&mut self, rec: &RoundRecord) {
        self.push(rec.clone());
    }
}

/// Ground-truth mirror of the players' clean-sample estimators; flags the
/// run once any Hoeffding band is violated. Contaminated samples (collision
/// rewards absorbed into an arm estimator and vice versa) are excluded: the
/// band concerns estimators of the arm's true distribution.
struct GoodEventTracker {
    params: ConfidenceParams,
    arm_mirror: Vec<ArmStats>, // players * arms
    coll_mirror: Vec<ArmStats>,
    arms: usize,
    quick_bound: f64,
    held: bool,
}

impl GoodEventTracker {
    fn new(params: ConfidenceParams) -> Self {
        let m = params.num_players() as usize;
        let k = params.num_arms() as usize;
        GoodEventTracker {
            params,
            arm_mirror: vec![ArmStats::default(); m * k],
            coll_mirror: vec![ArmStats::default(); m],
            arms: k,
            quick_bound: 2.0 * conf_log(1, &params),
            held: true,
        }
    }

    /// `|mean - mu| <= conf_width(n)` rewritten division-free:
    /// `(sum - n mu)^2 <= 2 n conf_log(n)`, with the n = 1 log as a quick
    /// lower bound on the right side.
    #[inline]
    fn band_ok(&self, s: &ArmStats, mu: f64) -> bool {
        let n = s.count as f64;
        let d = s.sum - n * mu;
        let lhs = d * d;
        lhs <= self.quick_bound * n || lhs <= 2.0 * n * conf_log(s.count, &self.params)
    }

    #[inline]
    fn push_arm(&mut self, player: usize, arm: usize, x: f64, mu: f64) {
        let s = &mut self.arm_mirror[player * self.arms + arm];
        s.push(x);
        let s = *s;
        if !self.band_ok(&s, mu) {
            self.held = false;
        }
    }

    #[inline]
    fn push_collision(&mut self, player: usize, x: f64, mu: f64) {
        let s = &mut self.coll_mirror[player];
        s.push(x);
        let s = *s;
        if !self.band_ok(&s, mu) {
            self.held = false;
        }
    }

    fn reset_player(&mut self, player: usize) {
        for a in 0..self.arms {
            self.arm_mirror[player * self.arms + a].reset();
        }
        self.coll_mirror[player].reset();
    }
}

/// Run one replica without streaming records.
pub fn run(cfg: &RunConfig, instance: &BanditInstance, seed: u64) -> Result<RunMetrics, RunError> {
    run_with_sink(cfg, instance, seed, &mut NullSink)
}

/// Run one replica collecting every round record (small horizons only).
pub fn run_collect(
    cfg: &RunConfig,
    instance: &BanditInstance,
    seed: u64,
) -> Result<(RunMetrics, Vec<RoundRecord>), RunError> {
    let mut records = Vec::new();
    let metrics = run_with_sink(cfg, instance, seed, &mut records)?;
    Ok((metrics, records))
}

pub fn run_with_sink(
    cfg: &RunConfig,
    instance: &BanditInstance,
    seed: u64,
    sink: &mut dyn RecordSink,
) -> Result<RunMetrics, RunError> {
    let params = cfg.params().map_err(|e| RunError::BadParams(e.to_string()))?;
    if instance.num_arms() != cfg.num_arms as usize {
        return Err(RunError::ArmCountMismatch {
            config: cfg.num_arms,
            instance: instance.num_arms(),
        });
    }
    if cfg.mode == Mode::Zero && instance.collision_mean() != 0.0 {
        return Err(RunError::ZeroModeNeedsZeroCollision(instance.collision_mean()));
    }
    if cfg.horizon == 0 {
        return Err(RunError::ZeroHorizon);
    }
    let thresholds = boundary_thresholds(&params).map_err(|e| RunError::BadParams(e.to_string()))?;

    let m = cfg.num_players as usize;
    let mut players: Vec<PlayerState> = (0..m)
        .map(|id| PlayerState::new(id, cfg.mode, params, cfg.blowup, &thresholds))
        .collect();
    let mut rng = Rng::seed_from(seed);
    let mut tracker = GoodEventTracker::new(params);

    let mut metrics = RunMetrics {
        seed,
        rounds_ran: 0,
        cum_regret: 0.0,
        cum_regret_collision_aware: 0.0,
        collisions_total: 0,
        collisions_estimate_phase: 0,
        rr_collision_violations: 0,
        good_event_held: true,
        exploit_all_round: None,
        regret_at_exploit_all: 0.0,
        decomposition: RegretDecomposition::default(),
        phase_rounds: BTreeMap::new(),
        samples: Vec::new(),
        events: Vec::new(),
        events_truncated: false,
        final_players: Vec::new(),
    };

    if players.iter().all(|p| p.is_exploit()) {
        metrics.exploit_all_round = Some(0);
    }

    let mut rec = RoundRecord::default();
    let mut events = Vec::new();
    let mut choices = vec![0usize; m];
    let mut next_geom = cfg.grid.dense_until.max(1);
    let mut phase_counts = [0u64; crate::player::PHASE_NAMES.len()];
    const SAMPLE_CAP: usize = 200_000;

    for t in 1..=cfg.horizon {
        let mut deviating = false;
        for (p, choice) in players.iter_mut().zip(choices.iter_mut()) {
            let (arm, dev) = p.choose(t);
            *choice = arm;
            deviating |= dev;
        }
        resolve_round_into(instance, &choices, &mut rng, &mut rec);
        rec.round = t;

        events.clear();
        let mut any_estimating = false;
        for (pi, p) in players.iter_mut().enumerate() {
            let code = p.phase_code();
            phase_counts[code] += 1;
            any_estimating |= code <= 1;
            let out = p.observe(t, choices[pi], rec.rewards[pi], &mut events);
            match out.route {
                SampleRoute::Arm(arm) => {
                    if !rec.collided[pi] {
                        tracker.push_arm(pi, arm, rec.rewards[pi], instance.means()[arm]);
                    }
                }
                SampleRoute::Collision => {
                    if rec.collided[pi] {
                        tracker.push_collision(pi, rec.rewards[pi], instance.collision_mean());
                    }
                }
                SampleRoute::Discarded => {}
            }
            if out.reset {
                tracker.reset_player(pi);
            }
        }

        let n_collided = rec.collided.iter().filter(|&&c| c).count() as u64;
        let all_exploit = players.iter().all(|p| p.is_exploit());
        let tag = if all_exploit && n_collided == 0 {
            ROUND_TAG_EXPLOIT
        } else if n_collided > 0 {
            ROUND_TAG_COLLISION
        } else {
            ROUND_TAG_RR
        };
        metrics.cum_regret += rec.instantaneous_regret;
        metrics.cum_regret_collision_aware += rec.instantaneous_regret_collision_aware;
        metrics.collisions_total += n_collided;
        if n_collided > 0 {
            if !deviating {
                metrics.rr_collision_violations += n_collided;
            }
            if any_estimating {
                metrics.collisions_estimate_phase += n_collided;
            }
        }
        match tag {
            ROUND_TAG_RR => metrics.decomposition.round_robin += rec.instantaneous_regret,
            ROUND_TAG_COLLISION => metrics.decomposition.collision += rec.instantaneous_regret,
            _ => metrics.decomposition.exploit += rec.instantaneous_regret,
        }
        if metrics.exploit_all_round.is_none() && all_exploit {
            metrics.exploit_all_round = Some(t);
            metrics.regret_at_exploit_all = metrics.cum_regret;
        }

        if !events.is_empty() {
            rec.events.extend(events.iter().map(|e| e.tag().to_string()));
            if metrics.events.len() + events.len() <= EVENT_LOG_CAP {
                metrics.events.extend(events.iter().map(|e| (t, e.clone())));
            } else {
                metrics.events_truncated = true;
            }
        }

        let sample_due = t <= cfg.grid.dense_until || t >= next_geom || !events.is_empty();
        if sample_due && metrics.samples.len() < SAMPLE_CAP {
            while next_geom <= t {
                next_geom = ((next_geom as f64 * cfg.grid.ratio) as u64).max(next_geom + 1);
            }
            metrics.samples.push(GridPoint {
                round: t,
                cum_regret: metrics.cum_regret,
                cum_regret_collision_aware: metrics.cum_regret_collision_aware,
                cum_collisions: metrics.collisions_total,
                phase_tag: tag,
                event: rec.events.join("+"),
            });
        }
        sink.on_round(&rec);
        metrics.rounds_ran = t;

        // splits always come with events, so the scan is skipped on quiet rounds
        if cfg.stop == StopRule::FirstPartition
            && !events.is_empty()
            && players.iter().all(|p| p.settled_once())
        {
            break;
        }
    }

    metrics.good_event_held = tracker.held;
    for (code, &n) in phase_counts.iter().enumerate() {
        if n > 0 {
            metrics.phase_rounds.insert(crate::player::PHASE_NAMES[code], n);
        }
    }
    metrics.final_players = players
        .iter()
        .map(|p| PlayerSummary {
            player: p.id(),
            phase: p.phase_name(),
            epoch: p.epoch(),
            arm_set: p.arm_set().to_vec(),
        })
        .collect();
    Ok(metrics)
}

/// Partition the cumulative pseudo-regret by round tag; the parts sum to the
/// total exactly.
pub fn regret_decomposition(metrics: &RunMetrics) -> &RegretDecomposition {
    &metrics.decomposition
}

/// Run replicas `0..replicas` concurrently on up to `jobs` threads. Replica
/// `i` uses the stream seed `split_seed(base_seed, i)`; results come back in
/// replica order regardless of scheduling.
pub fn run_batch(
    cfg: &RunConfig,
    instance: &BanditInstance,
    base_seed: u64,
    replicas: u64,
    jobs: usize,
) -> Result<Vec<RunMetrics>, RunError> {
    let jobs = jobs.max(1);
    let next = std::sync::atomic::AtomicU64::new(0);
    let results: Vec<std::sync::Mutex<Option<Result<RunMetrics, RunError>>>> =
        (0..replicas).map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(replicas as usize) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= replicas {
                    break;
                }
                let seed = crate::rng::split_seed(base_seed, i);
                let res = run(cfg, instance, seed);
                *results[i as usize].lock().unwrap() = Some(res);
            });
        }
    });
    results
        .into_iter()
        .map(|m| m.into_inner().unwrap().expect("worker finished"))
        .collect()
}
