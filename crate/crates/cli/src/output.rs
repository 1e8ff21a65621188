//! Result persistence: per-replica CSV streams, a JSON summary and the
//! resolved config, all stamped with the config hash and seed.

use crate::config_file::Experiment;
use collidecomm_core::harness::RunMetrics;
use collidecomm_core::rng::split_seed;
use serde::Serialize;
use std::io::Write;
use std::path::{Path, PathBuf};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Serialize)]
struct ReplicaSummary {
    replica: u64,
    seed: u64,
    horizon: u64,
    rounds_ran: u64,
    cum_regret: f64,
    cum_regret_collision_aware: f64,
    collisions_total: u64,
    collisions_estimate_phase: u64,
    rr_collision_violations: u64,
    good_event_held: bool,
    exploit_all_round: Option<u64>,
    regret_at_exploit_all: f64,
    phase_rounds: std::collections::BTreeMap<&'static str, u64>,
}

#[derive(Serialize)]
struct Summary<'a> {
    version: &'static str,
    config_hash: String,
    base_seed: u64,
    config: &'a str,
    replicas: Vec<ReplicaSummary>,
    aggregate: Aggregate,
}

#[derive(Serialize)]
struct Aggregate {
    replicas: u64,
    median_regret: f64,
    mean_regret: f64,
    good_event_failures: u64,
    all_exploit_fraction: f64,
}

fn aggregate(rows: &[ReplicaSummary]) -> Aggregate {
    let mut regrets: Vec<f64> = rows.iter().map(|r| r.cum_regret).collect();
    regrets.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let median_regret = if regrets.is_empty() {
        0.0
    } else {
        regrets[regrets.len() / 2]
    };
    Aggregate {
        replicas: rows.len() as u64,
        median_regret,
        mean_regret: regrets.iter().sum::<f64>() / regrets.len().max(1) as f64,
        good_event_failures: rows.iter().filter(|r| !r.good_event_held).count() as u64,
        all_exploit_fraction: rows.iter().filter(|r| r.exploit_all_round.is_some()).count() as f64
            / rows.len().max(1) as f64,
    }
}

fn out_dir(exp: &Experiment) -> PathBuf {
    if let Some(out) = &exp.out {
        return PathBuf::from(out);
    }
    let root = std::env::var("COLLIDECOMM_OUT").unwrap_or_else(|_| "runs".into());
    Path::new(&root).join(format!("exp-{:016x}", exp.hash()))
}

fn write_replica_csv(
    path: &Path,
    exp: &Experiment,
    seed: u64,
    metrics: &RunMetrics,
) -> std::io::Result<()> {
    let file = std::fs::File::create(path)?;
    let mut w = std::io::BufWriter::new(file);
    writeln!(w, "# config_hash={:016x} seed={} version={}", exp.hash(), seed, VERSION)?;
    writeln!(w, "round,cum_regret,cum_collisions,phase_tag,event")?;
    for gp in &metrics.samples {
        writeln!(
            w,
            "{},{},{},{},{}",
            gp.round, gp.cum_regret, gp.cum_collisions, gp.phase_tag, gp.event
        )?;
    }
    Ok(())
}

fn summarize(exp: &Experiment, horizon: u64, i: u64, m: &RunMetrics) -> ReplicaSummary {
    ReplicaSummary {
        replica: i,
        seed: split_seed(exp.seed, i),
        horizon,
        rounds_ran: m.rounds_ran,
        cum_regret: m.cum_regret,
        cum_regret_collision_aware: m.cum_regret_collision_aware,
        collisions_total: m.collisions_total,
        collisions_estimate_phase: m.collisions_estimate_phase,
        rr_collision_violations: m.rr_collision_violations,
        good_event_held: m.good_event_held,
        exploit_all_round: m.exploit_all_round,
        regret_at_exploit_all: m.regret_at_exploit_all,
        phase_rounds: m.phase_rounds.clone(),
    }
}

/// Run the batches and write every artifact. `horizons` has one entry for
/// plain runs and the sweep list otherwise.
pub fn run_experiment(
    exp: &Experiment,
    horizons: &[u64],
    sweep: bool,
    run_replicas: impl Fn(&Experiment, u64) -> Result<Vec<RunMetrics>, String>,
) -> Result<PathBuf, String> {
    let dir = out_dir(exp);
    std::fs::create_dir_all(&dir).map_err(|e| format!("creating {}: {e}", dir.display()))?;

    let config_text = exp.canonical_text();
    std::fs::write(
        dir.join("config.resolved.txt"),
        format!("# config_hash={:016x} version={VERSION}\n{config_text}", exp.hash()),
    )
    .map_err(|e| e.to_string())?;

    let mut all_rows = Vec::new();
    let mut sweep_csv = String::new();
    if sweep {
        sweep_csv.push_str(&format!(
            "# config_hash={:016x} base_seed={} version={VERSION}\n",
            exp.hash(),
            exp.seed
        ));
        sweep_csv.push_str("horizon,replica,seed,cum_regret,collisions,good_event,exploit_all_round\n");
    }
    for &horizon in horizons {
        let metrics = run_replicas(exp, horizon)?;
        for (i, m) in metrics.iter().enumerate() {
            let i = i as u64;
            let name = if sweep {
                format!("replica_T{horizon}_{i:04}.csv")
            } else {
                format!("replica_{i:04}.csv")
            };
            write_replica_csv(&dir.join(name), exp, split_seed(exp.seed, i), m)
                .map_err(|e| e.to_string())?;
            if sweep {
                sweep_csv.push_str(&format!(
                    "{horizon},{i},{},{},{},{},{}\n",
                    split_seed(exp.seed, i),
                    m.cum_regret,
                    m.collisions_total,
                    m.good_event_held,
                    m.exploit_all_round.map(|r| r.to_string()).unwrap_or_default(),
                ));
            }
            all_rows.push(summarize(exp, horizon, i, m));
        }
    }
    if sweep {
        std::fs::write(dir.join("sweep.csv"), sweep_csv).map_err(|e| e.to_string())?;
    }

    let summary = Summary {
        version: VERSION,
        config_hash: format!("{:016x}", exp.hash()),
        base_seed: exp.seed,
        config: &config_text,
        aggregate: aggregate(&all_rows),
        replicas: all_rows,
    };
    let json = serde_json::to_string_pretty(&summary).map_err(|e| e.to_string())?;
    std::fs::write(dir.join("summary.json"), json).map_err(|e| e.to_string())?;
    Ok(dir)
}
