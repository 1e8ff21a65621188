//! Ground-truth analysis of finished runs: reconstructs communication
//! episodes from the event log and checks the quantitative properties the
//! protocol is supposed to satisfy (trigger-time sandwich, cycle-ratio bound,
//! witness intervals, partition-gap ratio).

use crate::env::BanditInstance;
use crate::harness::RunMetrics;
use crate::player::ProtocolEvent;
use crate::schedule::{conf_log, ConfidenceParams};
use std::collections::BTreeMap;

/// One communication episode (one epoch of one group), reconstructed from
/// events.
#[derive(Debug, Clone)]
pub struct EpisodeReport {
    pub epoch: u32,
    pub communicator: usize,
    /// Arm set of the sub-problem (global ids).
    pub arm_set: Vec<usize>,
    /// The transmitted top component (global ids), from the communicator.
    pub top: Vec<usize>,
    /// Communicator's trigger and send cycles (main phase).
    pub s_first_comm: Option<u64>,
    pub s_comm1: Option<u64>,
    /// Main-phase trigger cycle per player.
    pub s_first: BTreeMap<usize, u64>,
    /// Per listener: final listen cycle equals the send cycle.
    pub listen_matched: BTreeMap<usize, bool>,
    /// Per listener: decoded top component equals the transmitted one.
    pub decoded_ok: BTreeMap<usize, bool>,
    /// Main-phase probe invocations per listener.
    pub probes: BTreeMap<usize, u32>,
    /// Channel arm (global id) the communicator collided on.
    pub channel_arm: Option<usize>,
    /// Witness values of the channel arm recorded by listeners at their final
    /// listen, and the estimation-phase equivalents.
    pub channel_witnesses: Vec<f64>,
    pub channel_witnesses_estimate: Vec<f64>,
    /// Ground truth: separating gap of the transmitted partition.
    pub delta_tilde: f64,
    /// Largest consecutive gap inside this sub-problem's arm set.
    pub max_gap: f64,
    /// Every player of the group applied this epoch's split.
    pub complete: bool,
}

/// Rebuild per-epoch episodes from the event log. Only groups that actually
/// recursed (or communicated) appear.
pub fn episodes(metrics: &RunMetrics, instance: &BanditInstance) -> Vec<EpisodeReport> {
    #[derive(Default)]
    struct Acc {
        s_first: BTreeMap<usize, u64>,
        comm1: Option<(usize, u64, usize)>, // player, cycles, channel arm
        s_comm_first: BTreeMap<usize, u64>,
        listens: BTreeMap<usize, (u64, Vec<(usize, f64)>)>, // last main listen
        est_listens: BTreeMap<usize, Vec<(usize, f64)>>,    // last estimate listen
        probes: BTreeMap<usize, u32>,
        recursed: BTreeMap<usize, (Vec<usize>, Vec<usize>)>, // arm_set, top
    }
    let mut accs: BTreeMap<u32, Acc> = BTreeMap::new();

    for (_t, ev) in &metrics.events {
        match ev {
            ProtocolEvent::TFirst { player, epoch, cycles, estimate_phase: false } => {
                let acc = accs.entry(*epoch).or_default();
                acc.s_first.entry(*player).or_insert(*cycles);
            }
            ProtocolEvent::TComm { player, epoch, cycles, estimate_phase: false } => {
                let acc = accs.entry(*epoch).or_default();
                acc.s_comm_first.entry(*player).or_insert(*cycles);
            }
            ProtocolEvent::TComm1 { player, epoch, cycles, estimate_phase: false, channel_arm } => {
                let acc = accs.entry(*epoch).or_default();
                acc.comm1 = Some((*player, *cycles, *channel_arm));
            }
            ProtocolEvent::TListen { player, epoch, cycles, estimate_phase, witnesses } => {
                let acc = accs.entry(*epoch).or_default();
                if *estimate_phase {
                    acc.est_listens.insert(*player, witnesses.clone());
                } else {
                    acc.listens.insert(*player, (*cycles, witnesses.clone()));
                }
            }
            ProtocolEvent::Probe { player, epoch, estimate_phase: false, .. } => {
                let acc = accs.entry(*epoch).or_default();
                *acc.probes.entry(*player).or_insert(0) += 1;
            }
            ProtocolEvent::Recurse { player, epoch, arm_set, top } => {
                let acc = accs.entry(*epoch).or_default();
                acc.recursed.insert(*player, (arm_set.clone(), top.clone()));
            }
            _ => {}
        }
    }

    let means = instance.means();
    let mut out = Vec::new();
    for (epoch, acc) in accs {
        let communicator = match acc.comm1 {
            Some((p, _, _)) => p,
            // solo split: the only recursing player
            None => match acc.recursed.keys().next() {
                Some(&p) => p,
                None => continue,
            },
        };
        let Some((arm_set, top)) = acc.recursed.get(&communicator).cloned() else {
            continue;
        };
        let rest: Vec<usize> = arm_set.iter().copied().filter(|a| !top.contains(a)).collect();
        let delta_tilde = top.iter().map(|&a| means[a]).fold(f64::INFINITY, f64::min)
            - rest.iter().map(|&a| means[a]).fold(f64::NEG_INFINITY, f64::max);
        let mut sorted: Vec<f64> = arm_set.iter().map(|&a| means[a]).collect();
        sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
        let max_gap = sorted.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);

        let s_comm1 = acc.comm1.map(|(_, c, _)| c);
        let channel_arm = acc.comm1.map(|(_, _, a)| a);
        let group: Vec<usize> = if epoch == 0 {
            (0..metrics.final_players.len()).collect()
        } else {
            // group membership is only observable through this epoch's events
            let mut g: Vec<usize> = acc.recursed.keys().copied().collect();
            for &p in acc.listens.keys() {
                if !g.contains(&p) {
                    g.push(p);
                }
            }
            g.sort_unstable();
            g
        };

        let mut listen_matched = BTreeMap::new();
        let mut decoded_ok = BTreeMap::new();
        let mut channel_witnesses = Vec::new();
        let mut channel_witnesses_estimate = Vec::new();
        for &p in &group {
            if p == communicator {
                continue;
            }
            if let (Some(&(cycles, ref wits)), Some(sc)) = (acc.listens.get(&p), s_comm1) {
                listen_matched.insert(p, cycles == sc);
                if let Some(arm) = channel_arm {
                    if let Some(&(_, w)) = wits.iter().find(|&&(a, _)| a == arm) {
                        channel_witnesses.push(w);
                    }
                }
            }
            if let Some(arm) = channel_arm {
                if let Some(wits) = acc.est_listens.get(&p) {
                    if let Some(&(_, w)) = wits.iter().find(|&&(a, _)| a == arm) {
                        channel_witnesses_estimate.push(w);
                    }
                }
            }
            decoded_ok.insert(
                p,
                acc.recursed.get(&p).map(|(aset, t)| aset == &arm_set && t == &top).unwrap_or(false),
            );
        }
        let complete = group.iter().all(|p| acc.recursed.contains_key(p));

        out.push(EpisodeReport {
            epoch,
            communicator,
            arm_set,
            top,
            s_first_comm: acc.s_first.get(&communicator).copied(),
            s_comm1,
            s_first: acc.s_first,
            listen_matched,
            decoded_ok,
            probes: acc.probes,
            channel_arm,
            channel_witnesses,
            channel_witnesses_estimate,
            delta_tilde,
            max_gap,
            complete,
        });
    }
    out
}

/// Trigger-time sandwich: `128/gap² <= s/conf_log(s) < 1152/gap²`.
pub fn sandwich_ok(s_first: u64, gap: f64, params: &ConfidenceParams) -> bool {
    let ratio = s_first as f64 / conf_log(s_first, params);
    ratio >= 128.0 / (gap * gap) && ratio < 1152.0 / (gap * gap)
}

/// Send-cycle bound `s_comm1 <= 162 s_first`, applicable once `s_first` has
/// passed the width-monotonicity boundary.
pub fn ratio_162_ok(s_first: u64, s_comm1: u64, s_boundary2: u64) -> Option<bool> {
    (s_first >= s_boundary2).then(|| s_comm1 <= 162 * s_first)
}

/// Partition-gap bound: the largest consecutive gap is at most three times
/// the separating gap of the transmitted partition.
pub fn gap_ratio_3_ok(max_gap: f64, delta_tilde: f64) -> bool {
    max_gap <= 3.0 * delta_tilde + 1e-12
}

/// Zero-mode witness interval: `L in [mu/3, mu/2]` for the channel arm.
pub fn witness_zero_ok(witness: f64, channel_mean: f64) -> bool {
    witness >= channel_mean / 3.0 - 1e-12 && witness <= channel_mean / 2.0 + 1e-12
}

/// Collision-mode witness interval with blowup 10 (r = 16):
/// `L - mu_c in [(1/2 - 2/(r-2)) g, (1/2 + 2/(r-2)) g]` for `g = mu - mu_c`.
pub fn witness_collision_ok(witness: f64, channel_mean: f64, collision_mean: f64) -> bool {
    let r = 16.0;
    let g = channel_mean - collision_mean;
    let lo = collision_mean + (0.5 - 2.0 / (r - 2.0)) * g;
    let hi = collision_mean + (0.5 + 2.0 / (r - 2.0)) * g;
    witness >= lo - 1e-12 && witness <= hi + 1e-12
}

/// Pure-cycling baseline: pseudo-regret per round of everyone looping over
/// all arms forever.
pub fn round_robin_baseline_per_round(instance: &BanditInstance, players: usize) -> f64 {
    let k = instance.num_arms();
    let m = players.min(k);
    let top: f64 = instance.top_sum(m);
    let all: f64 = instance.means().iter().sum();
    // per full cycle of K rounds: K*top - M*all
    (k as f64 * top - m as f64 * all) / k as f64
}
