//! Decentralized multi-player multi-armed bandit protocol library and
//! lock-step simulator. Players coordinate only through their own reward
//! streams: deliberate collisions act as a one-bit channel, a power-of-nine
//! time code lines up senders and receivers, and recursive arm-set splits
//! drive every player onto the top-M arms.

pub mod comm;
pub mod config;
pub mod connectivity;
pub mod diagnostics;
pub mod env;
pub mod harness;
pub mod oracle;
pub mod player;
pub mod rng;
pub mod schedule;
pub mod verify;

pub use config::{Mode, RunConfig, StopRule};
pub use connectivity::{build_graph, conn_count, ArmStats, ConnectivityGraph};
pub use env::{pseudo_regret, resolve_round, BanditInstance, RewardFamily, RoundRecord};
pub use harness::{run, RunMetrics};
pub use player::{PlayerState, ProtocolEvent};
pub use schedule::{BoundaryThresholds, ConfidenceParams};
