//! Experiment runner: seeded replica batches, result persistence and the
//! property-verification batteries.
//!
//! Exit codes: 0 ok, 1 property failure, 2 configuration error.

mod config_file;
mod output;

use collidecomm_core::harness::{run, RunMetrics};
use collidecomm_core::rng::split_seed;
use collidecomm_core::verify::{verify_lemmas, verify_oracles, verify_protocol, PropertyResult};
use config_file::Experiment;
use std::process::ExitCode;

const USAGE: &str = "\
collidecomm: decentralized multi-player bandit simulator

USAGE:
  collidecomm run   --config FILE [FLAGS] [--override key=value]...
  collidecomm sweep --config FILE --horizons N1,N2,... [FLAGS]
  collidecomm verify <oracles|lemmas|protocol> [--seeds N]

FLAGS (run/sweep; every flag overrides the config file):
  --config FILE        experiment configuration (required)
  --mode MODE          zero | collision
  --horizon N          rounds per replica (suffixes k/M and 1e6 accepted)
  --seed S             base seed; replica i uses stream split_seed(S, i)
  --replicas R         number of replicas
  --jobs J             worker threads (default: available cores)
  --out DIR            output directory
  --override key=value extra config override (section.key or run key)

OUTPUT (run):
  <out>/replica_NNNN.csv     per-round metrics on the sampling grid
  <out>/summary.json         per-replica summaries + aggregate
  <out>/config.resolved.txt  resolved config (re-runnable, hash-stamped)

The default output root is $COLLIDECOMM_OUT, else ./runs.
";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.is_empty() || args[0] == "--help" || args[0] == "-h" {
        print!("{USAGE}");
        return ExitCode::from(if args.is_empty() { 2 } else { 0 });
    }
    match args[0].as_str() {
        "run" => cmd_run(&args[1..], false),
        "sweep" => cmd_run(&args[1..], true),
        "verify" => cmd_verify(&args[1..]),
        other => {
            eprintln!("unknown subcommand `{other}`\n\n{USAGE}");
            ExitCode::from(2)
        }
    }
}

struct Flags {
    config: Option<String>,
    overrides: Vec<(String, String)>,
    horizons: Vec<u64>,
    seeds: u64,
}

fn parse_flags(args: &[String]) -> Result<Flags, String> {
    let mut f = Flags { config: None, overrides: Vec::new(), horizons: Vec::new(), seeds: 10 };
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let mut take = |name: &str| {
            it.next().map(|s| s.to_string()).ok_or(format!("{name} needs a value"))
        };
        match a.as_str() {
            "--config" => f.config = Some(take("--config")?),
            "--mode" => f.overrides.push(("run.mode".into(), take("--mode")?)),
            "--horizon" => f.overrides.push(("run.horizon".into(), take("--horizon")?)),
            "--seed" => f.overrides.push(("run.seed".into(), take("--seed")?)),
            "--replicas" => f.overrides.push(("run.replicas".into(), take("--replicas")?)),
            "--jobs" => f.overrides.push(("run.jobs".into(), take("--jobs")?)),
            "--out" => f.overrides.push(("run.out".into(), take("--out")?)),
            "--seeds" => {
                f.seeds = take("--seeds")?.parse().map_err(|_| "--seeds expects an integer")?
            }
            "--horizons" => {
                let v = take("--horizons")?;
                for part in v.split(',') {
                    f.horizons
                        .push(parse_round_count(part.trim()).ok_or(format!("bad horizon `{part}`"))?);
                }
            }
            "--override" => {
                let v = take("--override")?;
                let (k, val) =
                    v.split_once('=').ok_or(format!("--override expects key=value, got `{v}`"))?;
                f.overrides.push((k.trim().to_string(), val.trim().to_string()));
            }
            other => return Err(format!("unknown flag `{other}`")),
        }
    }
    Ok(f)
}

fn parse_round_count(v: &str) -> Option<u64> {
    if v.contains('e') || v.contains('E') {
        return v.parse::<f64>().ok().map(|x| x as u64);
    }
    v.parse().ok()
}

fn load_experiment(flags: &Flags) -> Result<Experiment, String> {
    let path = flags.config.as_ref().ok_or("--config is required")?;
    let text = std::fs::read_to_string(path).map_err(|e| format!("reading {path}: {e}"))?;
    config_file::parse(&text, &flags.overrides).map_err(|e| format!("{path}: {e}"))
}

fn cmd_run(args: &[String], sweep: bool) -> ExitCode {
    let flags = match parse_flags(args) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}\n\n{USAGE}");
            return ExitCode::from(2);
        }
    };
    if sweep && flags.horizons.is_empty() {
        eprintln!("error: sweep requires --horizons");
        return ExitCode::from(2);
    }
    let exp = match load_experiment(&flags) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("config error: {e}");
            return ExitCode::from(2);
        }
    };
    let horizons = if sweep { flags.horizons.clone() } else { vec![exp.horizon] };
    match output::run_experiment(&exp, &horizons, sweep, run_replicas) {
        Ok(dir) => {
            println!("results written to {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("run failed: {e}");
            ExitCode::from(2)
        }
    }
}

/// Execute the replica batch for one horizon. Replicas run concurrently up
/// to the job limit; results come back in replica order.
fn run_replicas(exp: &Experiment, horizon: u64) -> Result<Vec<RunMetrics>, String> {
    let mut cfg = exp.run_config();
    cfg.horizon = horizon;
    let instance = exp.instance().map_err(|e| e.to_string())?;
    let jobs = if exp.jobs > 0 {
        exp.jobs
    } else {
        std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)
    };
    let replicas = exp.replicas;
    let next = std::sync::atomic::AtomicU64::new(0);
    let slots: Vec<std::sync::Mutex<Option<RunMetrics>>> =
        (0..replicas).map(|_| std::sync::Mutex::new(None)).collect();
    let mut failure: Option<String> = None;
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..jobs.min(replicas as usize).max(1))
            .map(|_| {
                scope.spawn(|| -> Result<(), String> {
                    loop {
                        let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        if i >= replicas {
                            return Ok(());
                        }
                        let seed = split_seed(exp.seed, i);
                        let m = run(&cfg, &instance, seed).map_err(|e| e.to_string())?;
                        *slots[i as usize].lock().unwrap() = Some(m);
                    }
                })
            })
            .collect();
        for h in handles {
            if let Err(e) = h.join().expect("worker panicked") {
                failure = Some(e);
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(slots.into_iter().map(|s| s.into_inner().unwrap().expect("replica ran")).collect())
}

fn cmd_verify(args: &[String]) -> ExitCode {
    let (suite, rest) = match args.split_first() {
        Some((s, rest)) => (s.as_str(), rest),
        None => {
            eprintln!("verify needs a suite: oracles | lemmas | protocol");
            return ExitCode::from(2);
        }
    };
    let flags = match parse_flags(rest) {
        Ok(f) => f,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let results: Vec<PropertyResult> = match suite {
        "oracles" => verify_oracles(),
        "lemmas" => verify_lemmas(flags.seeds),
        "protocol" => verify_protocol(flags.seeds),
        other => {
            eprintln!("unknown suite `{other}`: expected oracles | lemmas | protocol");
            return ExitCode::from(2);
        }
    };
    let mut all_ok = true;
    for r in &results {
        println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
        all_ok &= r.passed;
    }
    if all_ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
