//! Ground-truth environment. The only component that knows the true arm
//! means: it resolves which players collided, samples their rewards and
//! scores instantaneous regret.

use crate::rng::{bernoulli_threshold, Rng};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardFamily {
    Bernoulli,
    /// Beta(2μ, 2(1-μ)) rescaled draw; continuous support on [0, 1] with mean μ.
    ScaledBeta,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InstanceError {
    MeanOutOfRange(f64),
    CollisionAboveMin { collision: f64, min_mean: f64 },
    TooFewArms,
}

impl std::fmt::Display for InstanceError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InstanceError::MeanOutOfRange(m) => write!(f, "arm mean {m} outside [0,1]"),
            InstanceError::CollisionAboveMin { collision, min_mean } => write!(
                f,
                "collision mean {collision} exceeds the smallest arm mean {min_mean}"
            ),
            InstanceError::TooFewArms => write!(f, "an instance needs at least one arm"),
        }
    }
}

impl std::error::Error for InstanceError {}

/// True arm means, collision mean and reward family. Known only to the
/// environment and the test oracles, never to players.
#[derive(Debug, Clone)]
pub struct BanditInstance {
    means: Vec<f64>,
    collision_mean: f64,
    family: RewardFamily,
    /// Arm indices sorted by descending mean, ties by index.
    ranking: Vec<usize>,
    arm_thresholds: Vec<u64>,
    collision_threshold: u64,
    /// Bitmask of the top-m arms per m, so optimal collision-free rounds
    /// score exactly zero regret.
    top_masks: Vec<u64>,
}

impl BanditInstance {
    pub fn new(
        means: Vec<f64>,
        collision_mean: f64,
        family: RewardFamily,
    ) -> Result<Self, InstanceError> {
        if means.is_empty() {
            return Err(InstanceError::TooFewArms);
        }
        for &m in &means {
            if !(0.0..=1.0).contains(&m) {
                return Err(InstanceError::MeanOutOfRange(m));
            }
        }
        if !(0.0..=1.0).contains(&collision_mean) {
            return Err(InstanceError::MeanOutOfRange(collision_mean));
        }
        let min_mean = means.iter().cloned().fold(f64::INFINITY, f64::min);
        if collision_mean > min_mean {
            return Err(InstanceError::CollisionAboveMin { collision: collision_mean, min_mean });
        }
        let mut ranking: Vec<usize> = (0..means.len()).collect();
        ranking.sort_by(|&a, &b| means[b].partial_cmp(&means[a]).unwrap().then(a.cmp(&b)));
        let arm_thresholds = means.iter().map(|&m| bernoulli_threshold(m)).collect();
        let collision_threshold = bernoulli_threshold(collision_mean);
        let top_masks = if means.len() <= 64 {
            (0..=means.len())
                .map(|m| ranking[..m].iter().fold(0u64, |acc, &i| acc | (1 << i)))
                .collect()
        } else {
            Vec::new()
        };
        Ok(BanditInstance {
            means,
            collision_mean,
            family,
            ranking,
            arm_thresholds,
            collision_threshold,
            top_masks,
        })
    }

    pub fn num_arms(&self) -> usize {
        self.means.len()
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn collision_mean(&self) -> f64 {
        self.collision_mean
    }

    pub fn family(&self) -> RewardFamily {
        self.family
    }

    /// Arm indices by descending true mean (ties by index).
    pub fn ranking(&self) -> &[usize] {
        &self.ranking
    }

    /// Sum of the top `m` true means: the per-round optimum.
    pub fn top_sum(&self, m: usize) -> f64 {
        self.ranking[..m].iter().map(|&i| self.means[i]).sum()
    }

    /// Largest consecutive gap in the sorted means.
    pub fn max_consecutive_gap(&self) -> f64 {
        self.ranking
            .windows(2)
            .map(|w| self.means[w[0]] - self.means[w[1]])
            .fold(0.0, f64::max)
    }

    /// `mu(top arm) - mu(collision)`, the amplitude of the collision channel.
    pub fn collision_gap(&self) -> f64 {
        self.means[self.ranking[0]] - self.collision_mean
    }

    fn sample(&self, mean: f64, threshold: u64, rng: &mut Rng) -> f64 {
        match self.family {
            RewardFamily::Bernoulli => {
                if rng.bernoulli(threshold) {
                    1.0
                } else {
                    0.0
                }
            }
            RewardFamily::ScaledBeta => sample_beta_mean(mean, rng),
        }
    }

    fn sample_collision(&self, rng: &mut Rng) -> f64 {
        // Zero collision reward is the degenerate always-zero distribution.
        if self.collision_mean == 0.0 {
            return 0.0;
        }
        self.sample(self.collision_mean, self.collision_threshold, rng)
    }
}

/// One simulated round: who chose what, who collided, what they saw.
#[derive(Debug, Clone, Default, Serialize)]
pub struct RoundRecord {
    pub round: u64,
    pub choices: Vec<usize>,
    pub collided: Vec<bool>,
    pub rewards: Vec<f64>,
    /// Optimum minus the sum of chosen-arm means; collided pulls still
    /// contribute the chosen arm's mean, so this can dip below zero while
    /// players double up on a good arm.
    pub instantaneous_regret: f64,
    /// Same round scored with the collision mean charged on collided pulls.
    pub instantaneous_regret_collision_aware: f64,
    pub events: Vec<String>,
}

/// Resolve one round: detect collisions, sample rewards, score regret.
/// Colliding players draw independent collision rewards. Rewards are drawn in
/// player order, which the determinism contract relies on.
pub fn resolve_round(
    instance: &BanditInstance,
    choices: &[usize],
    rng: &mut Rng,
) -> RoundRecord {
    let mut rec = RoundRecord {
        round: 0,
        choices: choices.to_vec(),
        collided: vec![false; choices.len()],
        rewards: vec![0.0; choices.len()],
        instantaneous_regret: 0.0,
        instantaneous_regret_collision_aware: 0.0,
        events: Vec::new(),
    };
    resolve_round_into(instance, choices, rng, &mut rec);
    rec
}

/// Allocation-free variant used by the hot loop: reuses the record's buffers.
pub fn resolve_round_into(
    instance: &BanditInstance,
    choices: &[usize],
    rng: &mut Rng,
    rec: &mut RoundRecord,
) {
    let m = choices.len();
    let k = instance.num_arms();
    if rec.choices.len() != m {
        rec.choices.resize(m, 0);
        rec.collided.resize(m, false);
        rec.rewards.resize(m, 0.0);
    }
    rec.events.clear();

    let mut any_collision = false;
    let mut chosen_mask = 0u64;
    for (p, (&arm, (rc, coll))) in choices
        .iter()
        .zip(rec.choices.iter_mut().zip(rec.collided.iter_mut()))
        .enumerate()
    {
        assert!(arm < k, "player {p} chose arm {arm} out of range");
        *rc = arm;
        *coll = false;
        if arm < 64 {
            chosen_mask |= 1 << arm;
        }
    }
    for p in 0..m {
        for q in (p + 1)..m {
            if choices[q] == choices[p] {
                rec.collided[p] = true;
                rec.collided[q] = true;
                any_collision = true;
            }
        }
    }

    let opt = instance.top_sum(m.min(k));
    let mut chosen_sum = 0.0;
    let mut aware_sum = 0.0;
    for ((&arm, &collided), reward) in choices
        .iter()
        .zip(rec.collided.iter())
        .zip(rec.rewards.iter_mut())
    {
        chosen_sum += instance.means[arm];
        if collided {
            aware_sum += instance.collision_mean;
            *reward = instance.sample_collision(rng);
        } else {
            aware_sum += instance.means[arm];
            *reward = instance.sample(instance.means[arm], instance.arm_thresholds[arm], rng);
        }
    }
    // An optimal collision-free allocation scores exactly zero, free of
    // floating-point summation noise.
    let optimal = !any_collision
        && instance
            .top_masks
            .get(m)
            .map(|&mask| mask == chosen_mask)
            .unwrap_or(false);
    if optimal {
        rec.instantaneous_regret = 0.0;
        rec.instantaneous_regret_collision_aware = 0.0;
    } else {
        rec.instantaneous_regret = opt - chosen_sum;
        rec.instantaneous_regret_collision_aware = opt - aware_sum;
    }
}

/// Cumulative pseudo-regret of a recorded trace: only means enter, never the
/// realized random rewards.
pub fn pseudo_regret(records: &[RoundRecord], _instance: &BanditInstance) -> f64 {
    records.iter().map(|r| r.instantaneous_regret).sum()
}

/// Beta(2μ, 2(1-μ)) draw; degenerate endpoints return the mean itself.
fn sample_beta_mean(mean: f64, rng: &mut Rng) -> f64 {
    if mean <= 0.0 || mean >= 1.0 {
        return mean.clamp(0.0, 1.0);
    }
    let a = 2.0 * mean;
    let b = 2.0 * (1.0 - mean);
    let x = sample_gamma(a, rng);
    let y = sample_gamma(b, rng);
    x / (x + y)
}

/// Marsaglia-Tsang gamma sampler (shape-only, unit scale).
fn sample_gamma(shape: f64, rng: &mut Rng) -> f64 {
    if shape < 1.0 {
        // boost: Gamma(a) = Gamma(a+1) * U^(1/a)
        let g = sample_gamma(shape + 1.0, rng);
        let u: f64 = rng.next_f64().max(f64::MIN_POSITIVE);
        return g * u.powf(1.0 / shape);
    }
    let d = shape - 1.0 / 3.0;
    let c = 1.0 / (9.0 * d).sqrt();
    loop {
        let z = rng.next_gaussian();
        let v = 1.0 + c * z;
        if v <= 0.0 {
            continue;
        }
        let v3 = v * v * v;
        let u = rng.next_f64().max(f64::MIN_POSITIVE);
        if u.ln() < 0.5 * z * z + d - d * v3 + d * v3.ln() {
            return d * v3;
        }
    }
}
