//! The collision bit-channel: witness thresholds, the candidate-arm set a
//! listener inspects, the one-bit block test shared by the start-of-message
//! probe and per-bit decoding, and block timing arithmetic.

use crate::connectivity::ArmStats;

/// Mid-level threshold between an arm's estimated mean and the collision
/// level. A communication block whose mean falls below the witness reveals a
/// deliberate collision stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Witness {
    pub arm: usize,
    pub value: f64,
    pub snapshot_round: u64,
}

/// Witness in the zero-collision-reward setting: `(mean - width) / 2`.
pub fn witness_zero(mean: f64, width: f64) -> f64 {
    (mean - width) / 2.0
}

/// Witness with an estimated collision mean: halfway between the arm estimate
/// and the collision estimate.
pub fn witness_collision(mean: f64, collision_mean: f64) -> f64 {
    (mean - collision_mean) / 2.0 + collision_mean
}

/// Partition message: bit j set iff arm j (sub-problem indexing) belongs to
/// the top component.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Message {
    pub bits: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum CommError {
    EmptyOrFullComponent { size: usize, arm_count: usize },
    ArmOutOfRange { arm: usize, arm_count: usize },
    MissingBlockSamples { arm: usize },
}

impl std::fmt::Display for CommError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CommError::EmptyOrFullComponent { size, arm_count } => write!(
                f,
                "component of size {size} over {arm_count} arms carries no partition"
            ),
            CommError::ArmOutOfRange { arm, arm_count } => {
                write!(f, "arm {arm} out of range for {arm_count} arms")
            }
            CommError::MissingBlockSamples { arm } => {
                write!(f, "no block samples recorded for inspected arm {arm}")
            }
        }
    }
}

impl std::error::Error for CommError {}

impl Message {
    /// Member set encoded by the bits.
    pub fn member_set(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter_map(|(i, &b)| b.then_some(i))
            .collect()
    }

    /// A message that cannot come from a correct encoder: it carries no
    /// proper partition.
    pub fn is_malformed(&self) -> bool {
        let ones = self.bits.iter().filter(|&&b| b).count();
        ones == 0 || ones == self.bits.len()
    }
}

/// Encode a proper, non-empty component as a bit string of length
/// `arm_count`. Arm indices are 0-based within the sub-problem.
pub fn encode(component: &[usize], arm_count: usize) -> Result<Message, CommError> {
    if component.is_empty() || component.len() >= arm_count {
        return Err(CommError::EmptyOrFullComponent { size: component.len(), arm_count });
    }
    let mut bits = vec![false; arm_count];
    for &arm in component {
        if arm >= arm_count {
            return Err(CommError::ArmOutOfRange { arm, arm_count });
        }
        bits[arm] = true;
    }
    Ok(Message { bits })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TestMode {
    /// Collision reward known to be exactly zero.
    Zero,
    /// Unknown collision reward; thresholds are measured against its estimate.
    Collision,
}

/// Arms a listener inspects: those whose estimate clears half of the best
/// estimate (measured above the collision estimate when one exists).
pub fn max_arms(stats: &[ArmStats], mode: TestMode, collision_mean: Option<f64>) -> Vec<usize> {
    assert!(stats.iter().all(|s| s.count >= 1));
    let base = match mode {
        TestMode::Zero => 0.0,
        TestMode::Collision => {
            collision_mean.expect("collision mode needs a collision-mean estimate")
        }
    };
    let best = stats
        .iter()
        .map(|s| s.mean() - base)
        .fold(f64::NEG_INFINITY, f64::max);
    stats
        .iter()
        .enumerate()
        .filter_map(|(i, s)| (s.mean() - base >= 0.5 * best).then_some(i))
        .collect()
}

/// One-bit test: returns true (bit 1) iff some inspected arm's block mean
/// fell strictly below its witness. Drives both the start-of-message probe
/// and per-bit decoding.
///
/// `block_means[arm]` must be present for every inspected arm.
pub fn bit_test(
    inspected: &[usize],
    witnesses: &[f64],
    block_means: &[Option<f64>],
) -> Result<bool, CommError> {
    for &arm in inspected {
        let mean = block_means
            .get(arm)
            .copied()
            .flatten()
            .ok_or(CommError::MissingBlockSamples { arm })?;
        if mean < witnesses[arm] {
            return Ok(true);
        }
    }
    Ok(false)
}

/// Round interval `[start + (j-1)*K*block_len + 1, start + j*K*block_len]` of
/// block `j` (1-based). Block 1 is the start ping; blocks 2..=(bits+1) carry
/// the message.
pub fn block_bounds(t_start: u64, block_index: u32, block_len: u64, arms: u32) -> (u64, u64) {
    debug_assert!(block_index >= 1 && block_len >= 1);
    let span = arms as u64 * block_len;
    let lo = t_start + (block_index as u64 - 1) * span + 1;
    (lo, lo + span - 1)
}

/// Per-arm sample accumulator over one block window `(start, end]` of local
/// rounds.
#[derive(Debug, Clone, Default)]
pub struct BlockWindow {
    pub start: u64,
    pub end: u64,
    sums: Vec<f64>,
    counts: Vec<u64>,
}

impl BlockWindow {
    pub fn begin(&mut self, start: u64, end: u64, arms: usize) {
        self.start = start;
        self.end = end;
        self.sums.clear();
        self.sums.resize(arms, 0.0);
        self.counts.clear();
        self.counts.resize(arms, 0);
    }

    #[inline]
    pub fn active(&self, tau: u64) -> bool {
        tau > self.start && tau <= self.end
    }

    #[inline]
    pub fn push(&mut self, arm: usize, x: f64) {
        self.sums[arm] += x;
        self.counts[arm] += 1;
    }

    pub fn means(&self) -> Vec<Option<f64>> {
        self.sums
            .iter()
            .zip(&self.counts)
            .map(|(&s, &c)| (c > 0).then(|| s / c as f64))
            .collect()
    }

    pub fn count(&self, arm: usize) -> u64 {
        self.counts[arm]
    }
}
