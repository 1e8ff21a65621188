//! The decentralized per-player state machine.
//!
//! A player sees nothing but its own reward stream and the shared constants.
//! It cycles through arms, watches for its connectivity graph to split, lines
//! up with the other players on power-trigger cycles, and either transmits
//! the partition by deliberate collisions (smallest index in its group) or
//! listens for it. Decoded partitions recursively shrink the arm set until
//! the player round-robins over a final exploit set forever.
//!
//! Unknown-collision-reward runs prepend an estimation phase: an extended
//! cycle deliberately collides the communicating player with one listener per
//! cycle so everyone can estimate the collision mean, and a first
//! ping/listen exchange fixes the communication block length all later
//! message blocks use.

use crate::comm::{
    bit_test, encode, max_arms, witness_collision, witness_zero, BlockWindow, Message, TestMode,
};
use crate::config::Mode;
use crate::connectivity::{build_graph, conn_count, ArmStats};
use crate::schedule::{
    comm_block_len_pulls, conf_log, conf_width, floor_ratio, floor_ratio_value,
    power_trigger_from, BoundaryThresholds, ConfidenceParams,
};

/// Protocol events, logged into the round record stream.
#[derive(Debug, Clone, PartialEq)]
pub enum ProtocolEvent {
    TFirst { player: usize, epoch: u32, cycles: u64, estimate_phase: bool },
    TComm { player: usize, epoch: u32, cycles: u64, estimate_phase: bool },
    TComm1 { player: usize, epoch: u32, cycles: u64, estimate_phase: bool, channel_arm: usize },
    TListen {
        player: usize,
        epoch: u32,
        cycles: u64,
        estimate_phase: bool,
        witnesses: Vec<(usize, f64)>,
    },
    Probe { player: usize, epoch: u32, detected: bool, estimate_phase: bool },
    BitSent { player: usize, epoch: u32, index: usize, bit: bool },
    BitDecoded { player: usize, epoch: u32, index: usize, bit: bool },
    Recurse { player: usize, epoch: u32, arm_set: Vec<usize>, top: Vec<usize> },
    Exploit { player: usize, epoch: u32, set: Vec<usize> },
    Failure { player: usize, epoch: u32, reason: &'static str },
}

impl ProtocolEvent {
    pub fn tag(&self) -> &'static str {
        match self {
            ProtocolEvent::TFirst { .. } => "TFIRST",
            ProtocolEvent::TComm { .. } => "TCOMM",
            ProtocolEvent::TComm1 { .. } => "TCOMM1",
            ProtocolEvent::TListen { .. } => "TLISTEN",
            ProtocolEvent::Probe { .. } => "PROBE",
            ProtocolEvent::BitSent { .. } => "BIT_SENT",
            ProtocolEvent::BitDecoded { .. } => "BIT_DECODED",
            ProtocolEvent::Recurse { .. } => "RECURSE",
            ProtocolEvent::Exploit { .. } => "EXPLOIT",
            ProtocolEvent::Failure { .. } => "FAILURE",
        }
    }

    pub fn player(&self) -> usize {
        match self {
            ProtocolEvent::TFirst { player, .. }
            | ProtocolEvent::TComm { player, .. }
            | ProtocolEvent::TComm1 { player, .. }
            | ProtocolEvent::TListen { player, .. }
            | ProtocolEvent::Probe { player, .. }
            | ProtocolEvent::BitSent { player, .. }
            | ProtocolEvent::BitDecoded { player, .. }
            | ProtocolEvent::Recurse { player, .. }
            | ProtocolEvent::Exploit { player, .. }
            | ProtocolEvent::Failure { player, .. } => *player,
        }
    }
}

/// Where the player routed this round's sample. The harness mirrors these
/// updates against ground truth to track the good event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleRoute {
    /// Absorbed into the running estimator of this global arm.
    Arm(usize),
    /// Absorbed into the collision-mean estimator.
    Collision,
    /// Discarded by the protocol.
    Discarded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObserveOut {
    pub route: SampleRoute,
    /// True when the player restarted its estimators this round.
    pub reset: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Phase {
    // Collision-mean estimation (collision mode only).
    EstExplore,
    EstFindPower,
    EstPreComm,
    EstPing { end: u64 },
    EstProbe { t_listen: u64 },
    // Main protocol.
    Explore,
    FindPower,
    PreComm,
    Communicating { start: u64, block_rounds: u64 },
    ListenProbe { t_listen: u64, block_rounds: u64 },
    Decoding { t_listen: u64, block_rounds: u64, next_bit: usize },
    Exploit,
}

/// Phase names, indexed by [`PlayerState::phase_code`]. Codes 0 and 1 are the
/// collision-estimation phases.
pub const PHASE_NAMES: [&str; 9] = [
    "collision-estimate",
    "collision-estimate-comm",
    "explore",
    "find-power",
    "pre-comm",
    "communicating",
    "listen-probe",
    "decoding",
    "exploit",
];

impl Phase {
    fn code(&self) -> usize {
        match self {
            Phase::EstExplore | Phase::EstFindPower | Phase::EstPreComm => 0,
            Phase::EstPing { .. } | Phase::EstProbe { .. } => 1,
            Phase::Explore => 2,
            Phase::FindPower => 3,
            Phase::PreComm => 4,
            Phase::Communicating { .. } => 5,
            Phase::ListenProbe { .. } => 6,
            Phase::Decoding { .. } => 7,
            Phase::Exploit => 8,
        }
    }

    fn name(&self) -> &'static str {
        PHASE_NAMES[self.code()]
    }
}

/// Max(candidate trigger round, boundary round): the effective round from
/// which power triggers may be taken.
pub fn apply_boundary_guard(candidate: u64, thresholds: &BoundaryThresholds) -> u64 {
    candidate.max(thresholds.t_first_boundary)
}

pub struct PlayerState {
    id: usize,
    mode: Mode,
    params: ConfidenceParams,
    blowup: f64,
    /// Power triggers are only accepted at local cycles >= this.
    guard_cycles: u64,

    arm_set: Vec<usize>,
    group: Vec<usize>,
    local_q: usize, // 0-based index of `id` within `group`
    tau: u64,       // local round counter, reset at every sub-problem start
    last_global: u64,
    pending: Option<(u64, usize, bool)>, // (global round, local arm, deviating)

    // hot-loop counters replacing per-round division
    pos_in_cycle: u32, // 0-based position of the round about to be played
    cycle_len: u32,    // kbar for the main schedule, kbar + mbar while estimating
    cycles_done: u64,  // completed cycles in the current phase family
    rr_next: u32,      // local arm the cycle schedule plays next round
    /// `floor_ratio` of the previous completed cycle (`u64::MAX` = none).
    prev_ratio_floor: u64,
    scratch: Vec<f64>,
    // communication block cursor (communicator during a message)
    comm_block: u64,
    comm_pos: u64,
    comm_on: bool,

    stats: Vec<ArmStats>,
    coll_stats: ArmStats,
    window: BlockWindow,

    phase: Phase,
    epoch: u32,

    // recorded times, in local cycle units of the current sub-problem
    s_first: Option<u64>,
    s_comm: Option<u64>,
    s_comm1: Option<u64>,
    s_listen: Option<u64>,

    ctop: Option<Vec<usize>>, // communicator snapshot, local arm indices
    channel_arm: Option<usize>, // local index of the arm used to collide
    msg_bits: Vec<bool>,
    decoded: Vec<bool>,

    snap_witness: Vec<f64>,
    snap_maxarms: Vec<usize>,

    /// Block length (local rounds) learned in the estimation phase.
    t_collision_test: Option<u64>,
    est_channel_arm: Option<usize>,
}

impl PlayerState {
    pub fn new(
        id: usize,
        mode: Mode,
        params: ConfidenceParams,
        blowup: f64,
        thresholds: &BoundaryThresholds,
    ) -> Self {
        let arm_set: Vec<usize> = (0..params.num_arms() as usize).collect();
        let group: Vec<usize> = (0..params.num_players() as usize).collect();
        let k = arm_set.len();
        let mut p = PlayerState {
            id,
            mode,
            params,
            blowup,
            guard_cycles: thresholds.guard_cycles(params.num_arms() as u64),
            arm_set,
            group,
            local_q: id,
            tau: 0,
            last_global: 0,
            pending: None,
            pos_in_cycle: 0,
            cycle_len: 0,
            cycles_done: 0,
            rr_next: 0,
            prev_ratio_floor: u64::MAX,
            scratch: Vec::new(),
            comm_block: 0,
            comm_pos: 0,
            comm_on: false,
            stats: vec![ArmStats::default(); k],
            coll_stats: ArmStats::default(),
            window: BlockWindow::default(),
            phase: Phase::Explore,
            epoch: 0,
            s_first: None,
            s_comm: None,
            s_comm1: None,
            s_listen: None,
            ctop: None,
            channel_arm: None,
            msg_bits: Vec::new(),
            decoded: Vec::new(),
            snap_witness: Vec::new(),
            snap_maxarms: Vec::new(),
            t_collision_test: None,
            est_channel_arm: None,
        };
        p.phase = p.entry_phase();
        p.reset_schedule_counters();
        p
    }

    /// Re-arm the wrapping schedule counters for a fresh phase family.
    fn reset_schedule_counters(&mut self) {
        self.pos_in_cycle = 0;
        self.cycles_done = 0;
        self.rr_next = self.local_q as u32;
        self.prev_ratio_floor = u64::MAX;
        self.cycle_len = match self.phase {
            Phase::EstExplore => (self.kbar() + self.mbar()) as u32,
            _ => self.kbar() as u32,
        };
    }

    /// Phase a (sub-)problem starts in: straight to Exploit when the group is
    /// exactly large enough to cover its arms, estimation first in collision
    /// mode when there is anyone to collide with.
    fn entry_phase(&self) -> Phase {
        if self.arm_set.len() == self.group.len() {
            Phase::Exploit
        } else if self.mode == Mode::Collision && self.group.len() > 1 {
            Phase::EstExplore
        } else {
            Phase::Explore
        }
    }

    pub fn id(&self) -> usize {
        self.id
    }

    pub fn is_communicator(&self) -> bool {
        self.local_q == 0
    }

    pub fn is_exploit(&self) -> bool {
        matches!(self.phase, Phase::Exploit)
    }

    pub fn phase_name(&self) -> &'static str {
        self.phase.name()
    }

    /// Index into [`PHASE_NAMES`].
    pub fn phase_code(&self) -> usize {
        self.phase.code()
    }

    pub fn epoch(&self) -> u32 {
        self.epoch
    }

    pub fn arm_set(&self) -> &[usize] {
        &self.arm_set
    }

    /// True once the player has applied at least one split or sits in Exploit.
    pub fn settled_once(&self) -> bool {
        self.epoch > 0 || self.is_exploit()
    }

    #[inline]
    fn kbar(&self) -> usize {
        self.arm_set.len()
    }

    #[inline]
    fn mbar(&self) -> usize {
        self.group.len()
    }

    /// Next local arm and whether the choice deviates from a collision-free
    /// schedule.
    #[inline]
    fn next_choice(&self) -> (usize, bool) {
        match &self.phase {
            Phase::EstExplore | Phase::EstFindPower | Phase::EstPreComm | Phase::EstProbe { .. } => {
                if self.is_communicator() && self.pos_in_cycle as usize >= self.kbar() {
                    // pinned arm: the deliberate collision slot
                    (self.mbar() - 1, true)
                } else {
                    (self.rr_next as usize, false)
                }
            }
            Phase::EstPing { .. } => (self.est_channel_arm.unwrap(), true),
            Phase::Explore
            | Phase::FindPower
            | Phase::PreComm
            | Phase::ListenProbe { .. }
            | Phase::Decoding { .. }
            | Phase::Exploit => (self.rr_next as usize, false),
            Phase::Communicating { .. } => {
                if self.comm_on {
                    (self.channel_arm.unwrap(), true)
                } else {
                    (self.rr_next as usize, false)
                }
            }
        }
    }

    /// Arm to pull at global round `t` (must be the next unplayed round).
    pub fn choose_arm(&mut self, t: u64) -> usize {
        self.choose(t).0
    }

    /// Arm to pull plus whether the choice deliberately deviates from a
    /// collision-free schedule.
    #[inline]
    pub fn choose(&mut self, t: u64) -> (usize, bool) {
        assert_eq!(t, self.last_global + 1, "round {t} is not the next unplayed round");
        let (local, deviating) = self.next_choice();
        self.pending = Some((t, local, deviating));
        (self.arm_set[local], deviating)
    }

    /// Whether the pending choice deliberately deviates from a collision-free
    /// schedule. Valid after `choose_arm`.
    pub fn pending_deviates(&self) -> bool {
        self.pending.expect("no pending choice").2
    }

    /// Deliver the reward for the pending choice.
    pub fn observe(
        &mut self,
        t: u64,
        arm: usize,
        reward: f64,
        events: &mut Vec<ProtocolEvent>,
    ) -> ObserveOut {
        let (pt, local, _) = self.pending.take().expect("observe without a pending choice");
        debug_assert_eq!(t, pt, "observation round mismatch");
        debug_assert_eq!(arm, self.arm_set[local], "observation arm mismatch");
        let _ = (t, arm);
        self.last_global = pt;
        self.tau += 1;

        let route = self.absorb(local, reward);

        // advance the wrapping schedule counters for the round just played
        let special = self.pos_in_cycle + 1 == self.cycle_len;
        if special {
            self.pos_in_cycle = 0;
            self.cycles_done += 1;
        } else {
            self.pos_in_cycle += 1;
        }
        let kbar = self.kbar() as u32;
        if special && self.cycle_len != kbar {
            // estimation cycle wraps back to the player's own slot
            self.rr_next = self.local_q as u32;
        } else {
            // the cycle arm advances one slot per round
            self.rr_next = if self.rr_next + 1 == kbar { 0 } else { self.rr_next + 1 };
        }

        let reset = self.step_phase(special, events);
        ObserveOut { route, reset }
    }

    /// Sample routing into running estimators and open block windows.
    #[inline]
    fn absorb(&mut self, local: usize, reward: f64) -> SampleRoute {
        let tau = self.tau;
        let kbar = self.kbar();
        match &self.phase {
            Phase::EstExplore | Phase::EstFindPower | Phase::EstPreComm | Phase::EstProbe { .. } => {
                let u = self.pos_in_cycle as usize;
                if u < kbar {
                    self.stats[local].push(reward);
                    if self.window.active(tau) {
                        self.window.push(local, reward);
                    }
                    SampleRoute::Arm(self.arm_set[local])
                } else {
                    let m0 = u - kbar;
                    let designated =
                        if self.is_communicator() { 0 } else { self.mbar() - 1 - self.local_q };
                    if m0 == designated {
                        self.coll_stats.push(reward);
                        SampleRoute::Collision
                    } else {
                        SampleRoute::Discarded
                    }
                }
            }
            Phase::EstPing { .. } => SampleRoute::Discarded,
            Phase::Communicating { .. } => {
                self.stats[local].push(reward);
                SampleRoute::Arm(self.arm_set[local])
            }
            Phase::Explore
            | Phase::FindPower
            | Phase::PreComm
            | Phase::ListenProbe { .. }
            | Phase::Decoding { .. }
            | Phase::Exploit => {
                self.stats[local].push(reward);
                if self.window.active(tau) {
                    self.window.push(local, reward);
                }
                SampleRoute::Arm(self.arm_set[local])
            }
        }
    }

    /// Phase transitions after the sample is absorbed. `special` marks the
    /// completion of a schedule cycle. Returns true when the estimators were
    /// restarted.
    fn step_phase(&mut self, special: bool, events: &mut Vec<ProtocolEvent>) -> bool {
        let tau = self.tau;
        let kbar = self.kbar() as u64;
        match self.phase {
            Phase::EstExplore => {
                if special {
                    let s = self.cycles_done;
                    let cl = conf_log(s, &self.params);
                    let ratio = floor_ratio_value(s, cl);
                    let prev = self.prev_ratio_floor;
                    self.prev_ratio_floor = ratio;
                    if self.est_trigger(s, cl) {
                        self.s_first = Some(s);
                        // channel arm is fixed at the trigger snapshot
                        self.est_channel_arm = Some(self.argmax_mean());
                        events.push(ProtocolEvent::TFirst {
                            player: self.id,
                            epoch: self.epoch,
                            cycles: s,
                            estimate_phase: true,
                        });
                        self.phase = Phase::EstFindPower;
                        self.est_power_step(s, ratio, prev, events);
                    }
                }
                false
            }
            Phase::EstFindPower | Phase::EstPreComm => {
                if special {
                    let s = self.cycles_done;
                    let ratio = floor_ratio(s, &self.params);
                    let prev = self.prev_ratio_floor;
                    self.prev_ratio_floor = ratio;
                    self.est_power_step(s, ratio, prev, events);
                }
                false
            }
            Phase::EstPing { end } => {
                if tau == end {
                    self.finish_estimation();
                    return true;
                }
                false
            }
            Phase::EstProbe { t_listen } => {
                if tau == self.window.end {
                    let means = self.window.means();
                    let detected = bit_test(&self.snap_maxarms, &self.snap_witness, &means)
                        .unwrap_or(false);
                    events.push(ProtocolEvent::Probe {
                        player: self.id,
                        epoch: self.epoch,
                        detected,
                        estimate_phase: true,
                    });
                    if detected {
                        // t_listen is the shared block length; witnesses kept.
                        self.s_listen = Some(t_listen / (kbar + self.mbar() as u64));
                        self.t_collision_test = Some(t_listen.div_ceil(kbar) * kbar);
                        self.finish_estimation();
                        return true;
                    }
                    self.prev_ratio_floor = floor_ratio(self.cycles_done, &self.params);
                    self.phase = Phase::EstFindPower;
                }
                false
            }
            Phase::Explore => {
                if special {
                    let s = self.cycles_done;
                    let cl = conf_log(s, &self.params);
                    let ratio = floor_ratio_value(s, cl);
                    let prev = self.prev_ratio_floor;
                    self.prev_ratio_floor = ratio;
                    if self.split_detected(s, cl) {
                        let graph = build_graph(&self.stats, self.blowup, &self.params);
                        debug_assert!(conn_count(&graph) >= 2);
                        self.s_first = Some(s);
                        self.ctop = Some(graph.components[0].clone());
                        events.push(ProtocolEvent::TFirst {
                            player: self.id,
                            epoch: self.epoch,
                            cycles: s,
                            estimate_phase: false,
                        });
                        if self.mbar() == 1 {
                            // Nobody to tell: split on our own component.
                            let bits: Vec<bool> = (0..kbar as usize)
                                .map(|i| graph.components[0].contains(&i))
                                .collect();
                            return self.apply_split(&bits, events);
                        }
                        self.phase = Phase::FindPower;
                        return self.main_power_step(s, ratio, prev, events);
                    }
                }
                false
            }
            Phase::FindPower | Phase::PreComm => {
                if special {
                    let s = self.cycles_done;
                    let ratio = floor_ratio(s, &self.params);
                    let prev = self.prev_ratio_floor;
                    self.prev_ratio_floor = ratio;
                    return self.main_power_step(s, ratio, prev, events);
                }
                false
            }
            Phase::Communicating { block_rounds, .. } => {
                self.comm_pos += 1;
                if self.comm_pos == block_rounds {
                    // a block just completed; 0 is the ping, 1.. carry bits
                    let j = self.comm_block;
                    if j >= 1 {
                        events.push(ProtocolEvent::BitSent {
                            player: self.id,
                            epoch: self.epoch,
                            index: j as usize,
                            bit: self.msg_bits[j as usize - 1],
                        });
                    }
                    if j == self.msg_bits.len() as u64 {
                        let bits = self.msg_bits.clone();
                        return self.apply_split(&bits, events);
                    }
                    self.comm_pos = 0;
                    self.comm_block = j + 1;
                    self.comm_on = self.msg_bits[j as usize];
                }
                false
            }
            Phase::ListenProbe { t_listen, block_rounds } => {
                if tau == self.window.end {
                    let means = self.window.means();
                    let detected = bit_test(&self.snap_maxarms, &self.snap_witness, &means)
                        .unwrap_or(false);
                    events.push(ProtocolEvent::Probe {
                        player: self.id,
                        epoch: self.epoch,
                        detected,
                        estimate_phase: false,
                    });
                    if detected {
                        self.decoded.clear();
                        self.window.begin(tau, tau + block_rounds, kbar as usize);
                        self.phase = Phase::Decoding { t_listen, block_rounds, next_bit: 1 };
                    } else {
                        self.prev_ratio_floor = floor_ratio(self.cycles_done, &self.params);
                        self.phase = Phase::FindPower;
                    }
                }
                false
            }
            Phase::Decoding { t_listen, block_rounds, next_bit } => {
                if tau == self.window.end {
                    let means = self.window.means();
                    match bit_test(&self.snap_maxarms, &self.snap_witness, &means) {
                        Ok(bit) => {
                            self.decoded.push(bit);
                            events.push(ProtocolEvent::BitDecoded {
                                player: self.id,
                                epoch: self.epoch,
                                index: next_bit,
                                bit,
                            });
                            if next_bit == kbar as usize {
                                let msg = Message { bits: self.decoded.clone() };
                                if msg.is_malformed() {
                                    events.push(ProtocolEvent::Failure {
                                        player: self.id,
                                        epoch: self.epoch,
                                        reason: "malformed partition message",
                                    });
                                    self.s_first = None;
                                    self.ctop = None;
                                    self.prev_ratio_floor =
                                        floor_ratio(self.cycles_done, &self.params);
                                    self.phase = Phase::Explore;
                                } else {
                                    let bits = msg.bits;
                                    return self.apply_split(&bits, events);
                                }
                            } else {
                                self.window.begin(tau, tau + block_rounds, kbar as usize);
                                self.phase =
                                    Phase::Decoding { t_listen, block_rounds, next_bit: next_bit + 1 };
                            }
                        }
                        Err(_) => {
                            events.push(ProtocolEvent::Failure {
                                player: self.id,
                                epoch: self.epoch,
                                reason: "missing block samples mid-message",
                            });
                            self.s_first = None;
                            self.ctop = None;
                            self.prev_ratio_floor = floor_ratio(self.cycles_done, &self.params);
                            self.phase = Phase::Explore;
                        }
                    }
                }
                false
            }
            Phase::Exploit => false,
        }
    }

    /// Estimation-phase split trigger: the channel-arm interval separates
    /// from the collision interval. Arm and collision estimators both hold
    /// exactly s samples at a cycle boundary, so the comparison runs on sums.
    fn est_trigger(&self, s: u64, conf_log_s: f64) -> bool {
        if s == 0 {
            return false;
        }
        debug_assert!(self.stats.iter().all(|st| st.count == s));
        debug_assert_eq!(self.coll_stats.count, s);
        let best_sum = self.stats.iter().map(|st| st.sum).fold(f64::NEG_INFINITY, f64::max);
        let width = (2.0 * conf_log_s / s as f64).sqrt();
        best_sum - self.coll_stats.sum > s as f64 * self.blowup * width
    }

    /// Split trigger of the main schedule: with equal counts, the graph has a
    /// second component exactly when some adjacent pair of sorted means
    /// separates by more than `blowup * conf_width(s)`.
    fn split_detected(&mut self, s: u64, conf_log_s: f64) -> bool {
        debug_assert!(self.stats.iter().all(|st| st.count == s));
        let width = (2.0 * conf_log_s / s as f64).sqrt();
        let sep = s as f64 * self.blowup * width;
        self.scratch.clear();
        self.scratch.extend(self.stats.iter().map(|st| st.sum));
        self.scratch.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap());
        self.scratch.windows(2).any(|w| w[1] - w[0] > sep)
    }

    fn argmax_mean(&self) -> usize {
        // equal counts: the largest sum is the largest mean
        let mut best = 0;
        for i in 1..self.stats.len() {
            if self.stats[i].sum > self.stats[best].sum {
                best = i;
            }
        }
        best
    }

    fn argmax_lcb(&self) -> usize {
        let mut best = 0;
        let mut best_v = f64::NEG_INFINITY;
        for (i, s) in self.stats.iter().enumerate() {
            let v = s.mean() - conf_width(s.count, &self.params);
            if v > best_v {
                best_v = v;
                best = i;
            }
        }
        best
    }

    /// Estimation-phase power triggers (communicator side transitions).
    fn est_power_step(&mut self, s: u64, ratio: u64, prev: u64, events: &mut Vec<ProtocolEvent>) {
        if s < self.guard_cycles || power_trigger_from(ratio, prev).is_none() {
            return;
        }
        match self.phase {
            Phase::EstFindPower if self.is_communicator() => {
                self.s_comm = Some(s);
                events.push(ProtocolEvent::TComm {
                    player: self.id,
                    epoch: self.epoch,
                    cycles: s,
                    estimate_phase: true,
                });
                self.phase = Phase::EstPreComm;
            }
            Phase::EstPreComm => {
                let t_now = self.tau;
                self.s_comm1 = Some(s);
                self.t_collision_test = Some(t_now.div_ceil(self.kbar() as u64) * self.kbar() as u64);
                events.push(ProtocolEvent::TComm1 {
                    player: self.id,
                    epoch: self.epoch,
                    cycles: s,
                    estimate_phase: true,
                    channel_arm: self.arm_set[self.est_channel_arm.unwrap()],
                });
                self.phase = Phase::EstPing { end: 2 * t_now };
            }
            Phase::EstFindPower => {
                // listener: snapshot and open the window [tau+1, 2 tau]
                let t_now = self.tau;
                let coll = self.coll_stats.mean();
                self.snap_witness =
                    self.stats.iter().map(|st| witness_collision(st.mean(), coll)).collect();
                self.snap_maxarms = max_arms(&self.stats, TestMode::Collision, Some(coll));
                let witnesses: Vec<(usize, f64)> = self
                    .snap_maxarms
                    .iter()
                    .map(|&i| (self.arm_set[i], self.snap_witness[i]))
                    .collect();
                events.push(ProtocolEvent::TListen {
                    player: self.id,
                    epoch: self.epoch,
                    cycles: s,
                    estimate_phase: true,
                    witnesses,
                });
                self.window.begin(t_now, 2 * t_now, self.kbar());
                self.phase = Phase::EstProbe { t_listen: t_now };
            }
            _ => {}
        }
    }

    /// Main-protocol power triggers. Returns true if estimators restarted.
    fn main_power_step(
        &mut self,
        s: u64,
        ratio: u64,
        prev: u64,
        events: &mut Vec<ProtocolEvent>,
    ) -> bool {
        if s < self.guard_cycles || power_trigger_from(ratio, prev).is_none() {
            return false;
        }
        let kbar = self.kbar() as u64;
        let tau = self.tau;
        match self.phase {
            Phase::FindPower if self.is_communicator() => {
                self.s_comm = Some(s);
                events.push(ProtocolEvent::TComm {
                    player: self.id,
                    epoch: self.epoch,
                    cycles: s,
                    estimate_phase: false,
                });
                self.phase = Phase::PreComm;
                false
            }
            Phase::PreComm => {
                self.s_comm1 = Some(s);
                let channel = self.argmax_lcb();
                self.channel_arm = Some(channel);
                let ctop = self.ctop.clone().expect("communicator lost its component snapshot");
                self.msg_bits = encode(&ctop, kbar as usize)
                    .expect("top component is a proper non-empty subset")
                    .bits;
                let block_rounds = self.block_rounds(s);
                events.push(ProtocolEvent::TComm1 {
                    player: self.id,
                    epoch: self.epoch,
                    cycles: s,
                    estimate_phase: false,
                    channel_arm: self.arm_set[channel],
                });
                self.comm_pos = 0;
                self.comm_block = 0;
                self.comm_on = true;
                self.phase = Phase::Communicating { start: tau, block_rounds };
                false
            }
            Phase::FindPower => {
                // listener
                self.s_listen = Some(s);
                if self.mode == Mode::Zero {
                    self.snap_witness = self
                        .stats
                        .iter()
                        .map(|st| witness_zero(st.mean(), conf_width(st.count, &self.params)))
                        .collect();
                    self.snap_maxarms = max_arms(&self.stats, TestMode::Zero, None);
                }
                // collision mode keeps the estimation-phase witnesses
                let witnesses: Vec<(usize, f64)> = self
                    .snap_maxarms
                    .iter()
                    .map(|&i| (self.arm_set[i], self.snap_witness[i]))
                    .collect();
                events.push(ProtocolEvent::TListen {
                    player: self.id,
                    epoch: self.epoch,
                    cycles: s,
                    estimate_phase: false,
                    witnesses,
                });
                let block_rounds = self.block_rounds(s);
                self.window.begin(tau, tau + block_rounds, kbar as usize);
                self.phase = Phase::ListenProbe { t_listen: tau, block_rounds };
                false
            }
            _ => false,
        }
    }

    /// Rounds of one communication block: K * f(pulls) in zero mode, the
    /// estimation-phase length in collision mode.
    fn block_rounds(&self, s: u64) -> u64 {
        match self.mode {
            Mode::Zero => {
                self.kbar() as u64
                    * comm_block_len_pulls(s, &self.params)
                        .expect("block length scan cap exceeded")
            }
            Mode::Collision => self
                .t_collision_test
                .expect("collision mode reached communication without a block length"),
        }
    }

    /// End of the estimation phase: restart estimators, keep the learned
    /// block length (and, for listeners, the witness snapshots).
    fn finish_estimation(&mut self) {
        for s in &mut self.stats {
            s.reset();
        }
        self.coll_stats.reset();
        self.window = BlockWindow::default();
        self.tau = 0;
        self.s_first = None;
        self.s_comm = None;
        self.s_comm1 = None;
        self.ctop = None;
        self.phase = Phase::Explore;
        self.reset_schedule_counters();
    }

    /// Apply a decoded (or self-known) partition message. Returns true: the
    /// estimators always restart.
    fn apply_split(&mut self, bits: &[bool], events: &mut Vec<ProtocolEvent>) -> bool {
        let top_local: Vec<usize> =
            bits.iter().enumerate().filter_map(|(i, &b)| b.then_some(i)).collect();
        let top_global: Vec<usize> = top_local.iter().map(|&i| self.arm_set[i]).collect();
        let rest_global: Vec<usize> =
            (0..self.kbar()).filter(|i| !bits[*i]).map(|i| self.arm_set[i]).collect();
        events.push(ProtocolEvent::Recurse {
            player: self.id,
            epoch: self.epoch,
            arm_set: self.arm_set.clone(),
            top: top_global.clone(),
        });
        self.epoch += 1;

        let n_top = top_local.len();
        let (new_arms, new_group) = if n_top >= self.mbar() {
            (top_global, self.group.clone())
        } else if self.group[..n_top].contains(&self.id) {
            (top_global, self.group[..n_top].to_vec())
        } else {
            (rest_global, self.group[n_top..].to_vec())
        };
        self.restart(new_arms, new_group, events);
        true
    }

    fn restart(&mut self, arms: Vec<usize>, group: Vec<usize>, events: &mut Vec<ProtocolEvent>) {
        self.local_q = group.iter().position(|&p| p == self.id).expect("player left its group");
        self.arm_set = arms;
        self.group = group;
        self.tau = 0;
        self.stats.clear();
        self.stats.resize(self.arm_set.len(), ArmStats::default());
        self.coll_stats.reset();
        self.window = BlockWindow::default();
        self.s_first = None;
        self.s_comm = None;
        self.s_comm1 = None;
        self.s_listen = None;
        self.ctop = None;
        self.channel_arm = None;
        self.msg_bits.clear();
        self.decoded.clear();
        self.snap_witness.clear();
        self.snap_maxarms.clear();
        self.t_collision_test = None;
        self.est_channel_arm = None;
        self.phase = self.entry_phase();
        self.reset_schedule_counters();
        if self.is_exploit() {
            events.push(ProtocolEvent::Exploit {
                player: self.id,
                epoch: self.epoch,
                set: self.arm_set.clone(),
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::boundary_thresholds;

    fn mk_player(id: usize, m: u32, k: u32) -> PlayerState {
        let params = ConfidenceParams::new(m, k, 0.005).unwrap();
        let th = boundary_thresholds(&params).unwrap();
        PlayerState::new(id, Mode::Zero, params, 10.0, &th)
    }

    fn play_round(p: &mut PlayerState, t: u64, reward: f64) -> (usize, Vec<ProtocolEvent>) {
        let arm = p.choose_arm(t);
        let mut ev = Vec::new();
        p.observe(t, arm, reward, &mut ev);
        (arm, ev)
    }

    #[test]
    fn round_robin_offsets() {
        // K=3, M=2: round 1 -> arms (0, 1); round 2 -> arms (1, 2)
        let mut p0 = mk_player(0, 2, 3);
        let mut p1 = mk_player(1, 2, 3);
        assert_eq!(play_round(&mut p0, 1, 0.0).0, 0);
        assert_eq!(play_round(&mut p1, 1, 0.0).0, 1);
        assert_eq!(play_round(&mut p0, 2, 0.0).0, 1);
        assert_eq!(play_round(&mut p1, 2, 0.0).0, 2);
    }

    #[test]
    fn round_robin_never_collides() {
        let m = 3u32;
        let k = 5u32;
        let mut players: Vec<PlayerState> = (0..m as usize).map(|i| mk_player(i, m, k)).collect();
        for t in 1..=200u64 {
            let arms: Vec<usize> = players.iter_mut().map(|p| p.choose_arm(t)).collect();
            let mut sorted = arms.clone();
            sorted.sort_unstable();
            sorted.dedup();
            assert_eq!(sorted.len(), arms.len(), "collision at round {t}: {arms:?}");
            for p in &mut players {
                let arm = p.arm_set()[p.pending.unwrap().1];
                let mut ev = Vec::new();
                p.observe(t, arm, 0.5, &mut ev);
            }
        }
    }

    #[test]
    fn k_equals_m_starts_exploiting() {
        let p = mk_player(0, 3, 3);
        assert!(p.is_exploit());
        assert!(p.settled_once());
    }

    #[test]
    fn all_equal_means_never_split() {
        let mut p = mk_player(0, 2, 3);
        // constant rewards: all empirical means identical, graph stays whole
        for t in 1..=60_000u64 {
            let (_, ev) = play_round(&mut p, t, 0.5);
            assert!(ev.is_empty(), "unexpected event {ev:?}");
        }
        assert_eq!(p.phase_name(), "explore");
    }

    #[test]
    fn boundary_guard_is_max() {
        let params = ConfidenceParams::new(2, 3, 0.005).unwrap();
        let th = boundary_thresholds(&params).unwrap();
        assert_eq!(apply_boundary_guard(th.t_first_boundary + 3, &th), th.t_first_boundary + 3);
        assert_eq!(apply_boundary_guard(th.t_first_boundary / 2, &th), th.t_first_boundary);
        assert_eq!(apply_boundary_guard(th.t_first_boundary, &th), th.t_first_boundary);
    }

    #[test]
    fn communicate_arm_trace_follows_blocks() {
        // Hand-built communicator mid-protocol: message 101, block
        // per-arm length 2, K=3 -> blocks of 6 rounds: ping ON, ON, OFF, ON.
        let mut p = mk_player(0, 2, 3);
        p.tau = 120;
        p.last_global = 120;
        p.channel_arm = Some(1);
        p.msg_bits = vec![true, false, true];
        p.comm_pos = 0;
        p.comm_block = 0;
        p.comm_on = true;
        p.phase = Phase::Communicating { start: 120, block_rounds: 6 };
        let mut trace = Vec::new();
        for t in 121..=144 {
            let arm = p.choose_arm(t);
            trace.push(arm);
            let mut ev = Vec::new();
            p.observe(t, arm, 0.0, &mut ev);
        }
        let expect_on = [true, true, false, true];
        for (block, &on) in expect_on.iter().enumerate() {
            for i in 0..6 {
                let tau = 120 + block as u64 * 6 + i as u64 + 1;
                let arm = trace[block * 6 + i];
                if on {
                    assert_eq!(arm, 1, "block {block} round {i}");
                } else {
                    // off blocks resume the player's own cycling slot
                    assert_eq!(arm, ((tau - 1) % 3) as usize, "block {block} round {i}");
                }
            }
        }
        // observe() on the last round applied the split
        assert_eq!(p.epoch(), 1);
    }

    #[test]
    fn recurse_fewer_arms_than_players_splits_group() {
        // group {0,1,2} on 5 arms, top = {arms 1,3}: players 0,1 exploit,
        // player 2 restarts alone on the rest.
        for id in 0..3usize {
            let mut p = mk_player(id, 3, 5);
            let mut ev = Vec::new();
            let bits = vec![false, true, false, true, false];
            p.apply_split(&bits, &mut ev);
            if id < 2 {
                assert!(p.is_exploit());
                assert_eq!(p.arm_set(), &[1, 3]);
            } else {
                assert!(!p.is_exploit());
                assert_eq!(p.arm_set(), &[0, 2, 4]);
                assert!(p.is_communicator());
            }
        }
    }

    #[test]
    fn recurse_more_arms_than_players_restarts_everyone() {
        // group {0,1} on 5 arms, top of size 3: both restart on it.
        for id in 0..2usize {
            let mut p = mk_player(id, 2, 5);
            let mut ev = Vec::new();
            let bits = vec![true, true, true, false, false];
            p.apply_split(&bits, &mut ev);
            assert!(!p.is_exploit());
            assert_eq!(p.arm_set(), &[0, 1, 2]);
            assert_eq!(p.epoch(), 1);
        }
    }

    #[test]
    fn recurse_equal_size_exploits() {
        let mut p = mk_player(1, 2, 5);
        let mut ev = Vec::new();
        let bits = vec![true, false, true, false, false];
        p.apply_split(&bits, &mut ev);
        assert!(p.is_exploit());
        assert_eq!(p.arm_set(), &[0, 2]);
        assert!(ev.iter().any(|e| e.tag() == "EXPLOIT"));
    }
}
