//! Run-level configuration shared by the harness, the CLI and the test
//! suites.

use crate::schedule::{ConfidenceParams, ScheduleError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Collision reward known to be exactly zero.
    Zero,
    /// Unknown collision reward; an estimation phase precedes communication.
    Collision,
}

/// When a replica stops.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopRule {
    /// Run exactly `horizon` rounds.
    Horizon,
    /// Stop once every player has applied its first arm-set split (or reached
    /// Exploit), with `horizon` as a hard cap.
    FirstPartition,
}

/// Sampling grid for the metrics stream: every round up to `dense_until`,
/// then geometrically with the given ratio; protocol-event rounds are always
/// sampled.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub dense_until: u64,
    pub ratio: f64,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec { dense_until: 10_000, ratio: 1.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub mode: Mode,
    pub num_players: u32,
    pub num_arms: u32,
    pub delta: f64,
    /// Acknowledge running with delta above 1/162.
    pub delta_override: bool,
    pub horizon: u64,
    pub blowup: f64,
    pub stop: StopRule,
    pub grid: GridSpec,
}

impl RunConfig {
    pub fn new(mode: Mode, num_players: u32, num_arms: u32, delta: f64, horizon: u64) -> Self {
        RunConfig {
            mode,
            num_players,
            num_arms,
            delta,
            delta_override: false,
            horizon,
            blowup: 10.0,
            stop: StopRule::Horizon,
            grid: GridSpec::default(),
        }
    }

    pub fn params(&self) -> Result<ConfidenceParams, ScheduleError> {
        if self.delta_override {
            ConfidenceParams::with_relaxed_delta(self.num_players, self.num_arms, self.delta)
        } else {
            ConfidenceParams::new(self.num_players, self.num_arms, self.delta)
        }
    }
}
