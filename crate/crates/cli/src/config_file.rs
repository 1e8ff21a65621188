//! Experiment configuration: a sectioned key/value text file.
//!
//! Grammar (documented in the README):
//!   - `#` starts a comment, blank lines are ignored
//!   - `[section]` opens a section: `run`, `instance` or `grid`
//!   - `key = value` inside a section; values are scalars or comma lists
//!
//! Parse errors carry the line number. Unknown sections or keys are errors.

use collidecomm_core::config::{GridSpec, Mode, RunConfig, StopRule};
use collidecomm_core::env::{BanditInstance, RewardFamily};
use std::fmt::Write as _;

#[derive(Debug, Clone)]
pub struct ConfigError {
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.line {
            Some(n) => write!(f, "line {n}: {}", self.message),
            None => write!(f, "{}", self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(line: Option<usize>, message: impl Into<String>) -> ConfigError {
    ConfigError { line, message: message.into() }
}

/// Fully resolved experiment description.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub mode: Mode,
    pub players: u32,
    pub delta: f64,
    pub delta_override: bool,
    pub horizon: u64,
    pub blowup: f64,
    pub stop: StopRule,
    pub replicas: u64,
    pub seed: u64,
    pub jobs: usize,
    pub out: Option<String>,
    pub means: Vec<f64>,
    pub collision_mean: f64,
    pub family: RewardFamily,
    pub grid: GridSpec,
}

impl Experiment {
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            mode: self.mode,
            num_players: self.players,
            num_arms: self.means.len() as u32,
            delta: self.delta,
            delta_override: self.delta_override,
            horizon: self.horizon,
            blowup: self.blowup,
            stop: self.stop,
            grid: self.grid,
        }
    }

    pub fn instance(&self) -> Result<BanditInstance, ConfigError> {
        BanditInstance::new(self.means.clone(), self.collision_mean, self.family)
            .map_err(|e| err(None, format!("instance: {e}")))
    }

    /// Canonical re-parseable text of the resolved configuration.
    pub fn canonical_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "[run]");
        let _ = writeln!(
            s,
            "mode = {}",
            match self.mode {
                Mode::Zero => "zero",
                Mode::Collision => "collision",
            }
        );
        let _ = writeln!(s, "players = {}", self.players);
        let _ = writeln!(s, "delta = {}", self.delta);
        let _ = writeln!(s, "delta_override = {}", self.delta_override);
        let _ = writeln!(s, "horizon = {}", self.horizon);
        let _ = writeln!(s, "blowup = {}", self.blowup);
        let _ = writeln!(
            s,
            "stop = {}",
            match self.stop {
                StopRule::Horizon => "horizon",
                StopRule::FirstPartition => "first-partition",
            }
        );
        let _ = writeln!(s, "replicas = {}", self.replicas);
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "jobs = {}", self.jobs);
        // the output directory is not part of the experiment's identity
        let _ = writeln!(s, "\n[instance]");
        let means: Vec<String> = self.means.iter().map(|m| m.to_string()).collect();
        let _ = writeln!(s, "means = {}", means.join(", "));
        let _ = writeln!(s, "collision_mean = {}", self.collision_mean);
        let _ = writeln!(
            s,
            "family = {}",
            match self.family {
                RewardFamily::Bernoulli => "bernoulli",
                RewardFamily::ScaledBeta => "scaled-beta",
            }
        );
        let _ = writeln!(s, "\n[grid]");
        let _ = writeln!(s, "dense_until = {}", self.grid.dense_until);
        let _ = writeln!(s, "ratio = {}", self.grid.ratio);
        s
    }

    /// FNV-1a hash of the canonical text; embedded in every output file.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for b in self.canonical_text().bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
        h
    }
}

/// Parse the config text, then apply `key=value` overrides (dotted section
/// prefixes: `run.horizon=100`, `instance.collision_mean=0.1`; bare keys
/// default to the run section).
pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Experiment, ConfigError> {
    let mut fields: Vec<(usize, String, String)> = Vec::new(); // line, section.key, value
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            Some(p) => &raw[..p],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let name = name.trim();
            if !["run", "instance", "grid"].contains(&name) {
                return Err(err(Some(line_no), format!("unknown section [{name}]")));
            }
            section = name.to_string();
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(err(Some(line_no), format!("expected `key = value`, got `{line}`")));
        };
        if section.is_empty() {
            return Err(err(Some(line_no), "key outside of any [section]"));
        }
        fields.push((line_no, format!("{section}.{}", key.trim()), value.trim().to_string()));
    }
    for (k, v) in overrides {
        let key = if k.contains('.') { k.clone() } else { format!("run.{k}") };
        fields.push((0, key, v.clone()));
    }

    let mut mode = None;
    let mut players = None;
    let mut delta = None;
    let mut delta_override = false;
    let mut horizon = None;
    let mut blowup = 10.0f64;
    let mut stop = StopRule::Horizon;
    let mut replicas = 1u64;
    let mut seed = 0u64;
    let mut jobs = 0usize;
    let mut out = None;
    let mut means: Option<Vec<f64>> = None;
    let mut collision_mean = 0.0f64;
    let mut family = RewardFamily::Bernoulli;
    let mut grid = GridSpec::default();

    for (line, key, value) in &fields {
        let line = (*line > 0).then_some(*line);
        let bad = |what: &str| err(line, format!("{key}: {what} (got `{value}`)"));
        match key.as_str() {
            "run.mode" => {
                mode = Some(match value.as_str() {
                    "zero" => Mode::Zero,
                    "collision" => Mode::Collision,
                    _ => return Err(bad("expected zero|collision")),
                })
            }
            "run.players" => players = Some(value.parse().map_err(|_| bad("expected integer"))?),
            "run.delta" => delta = Some(value.parse().map_err(|_| bad("expected number"))?),
            "run.delta_override" => {
                delta_override = value.parse().map_err(|_| bad("expected true|false"))?
            }
            "run.horizon" => horizon = Some(parse_u64(value).ok_or_else(|| bad("expected integer"))?),
            "run.blowup" => blowup = value.parse().map_err(|_| bad("expected number"))?,
            "run.stop" => {
                stop = match value.as_str() {
                    "horizon" => StopRule::Horizon,
                    "first-partition" => StopRule::FirstPartition,
                    _ => return Err(bad("expected horizon|first-partition")),
                }
            }
            "run.replicas" => replicas = value.parse().map_err(|_| bad("expected integer"))?,
            "run.seed" => seed = value.parse().map_err(|_| bad("expected integer"))?,
            "run.jobs" => jobs = value.parse().map_err(|_| bad("expected integer"))?,
            "run.out" => out = Some(value.clone()),
            "run.unknown_players" => {
                let v: bool = value.parse().map_err(|_| bad("expected true|false"))?;
                if v {
                    return Err(err(
                        line,
                        "unknown player count is out of scope: every player must know \
                         the total number of players",
                    ));
                }
            }
            "instance.means" => {
                let parsed: Result<Vec<f64>, _> =
                    value.split(',').map(|v| v.trim().parse::<f64>()).collect();
                means = Some(parsed.map_err(|_| bad("expected comma-separated numbers"))?);
            }
            "instance.collision_mean" => {
                collision_mean = value.parse().map_err(|_| bad("expected number"))?
            }
            "instance.family" => {
                family = match value.as_str() {
                    "bernoulli" => RewardFamily::Bernoulli,
                    "scaled-beta" => RewardFamily::ScaledBeta,
                    _ => return Err(bad("expected bernoulli|scaled-beta")),
                }
            }
            "grid.dense_until" => {
                grid.dense_until = parse_u64(value).ok_or_else(|| bad("expected integer"))?
            }
            "grid.ratio" => grid.ratio = value.parse().map_err(|_| bad("expected number"))?,
            _ => return Err(err(line, format!("unknown key `{key}`"))),
        }
    }

    let mode = mode.ok_or_else(|| err(None, "missing required field: run.mode"))?;
    let players = players.ok_or_else(|| err(None, "missing required field: run.players"))?;
    let delta = delta.ok_or_else(|| err(None, "missing required field: run.delta"))?;
    let horizon = horizon.ok_or_else(|| err(None, "missing required field: run.horizon"))?;
    let means = means.ok_or_else(|| err(None, "missing required field: instance.means"))?;
    if means.len() < 2 {
        return Err(err(None, "instance.means: need at least two arms"));
    }
    // zero mode runs on the exact always-zero collision distribution
    let collision_mean = if mode == Mode::Zero { 0.0 } else { collision_mean };
    if grid.ratio <= 1.0 {
        return Err(err(None, "grid.ratio must exceed 1"));
    }

    let exp = Experiment {
        mode,
        players,
        delta,
        delta_override,
        horizon,
        blowup,
        stop,
        replicas,
        seed,
        jobs,
        out,
        means,
        collision_mean,
        family,
        grid,
    };
    // surface parameter violations (delta range, M <= K) now, not at round 1
    exp.run_config().params().map_err(|e| err(None, format!("run parameters: {e}")))?;
    exp.instance()?;
    Ok(exp)
}

fn parse_u64(v: &str) -> Option<u64> {
    if let Some(stripped) = v.strip_suffix('M') {
        return stripped.parse::<f64>().ok().map(|x| (x * 1e6) as u64);
    }
    if let Some(stripped) = v.strip_suffix('k') {
        return stripped.parse::<f64>().ok().map(|x| (x * 1e3) as u64);
    }
    if v.contains('e') || v.contains('E') {
        return v.parse::<f64>().ok().map(|x| x as u64);
    }
    v.parse().ok()
}
