//! End-to-end checks of the binary: reproducibility of outputs, exit codes,
//! error messages.

use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_collidecomm"))
}

fn write_cfg(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("exp.cfg");
    std::fs::write(&path, body).unwrap();
    path
}

const CFG: &str = "
[run]
mode = zero
players = 2
delta = 0.005
horizon = 60000
replicas = 1
seed = 42

[instance]
means = 0.9, 0.4, 0.1
";

#[test]
fn rerun_is_byte_identical() {
    let tmp = std::env::temp_dir().join("collidecomm_cli_det");
    let _ = std::fs::remove_dir_all(&tmp);
    std::fs::create_dir_all(&tmp).unwrap();
    let cfg = write_cfg(&tmp, CFG);

    for pass in ["a", "b"] {
        let out = tmp.join(pass);
        let status = bin()
            .args(["run", "--config", cfg.to_str().unwrap(), "--out", out.to_str().unwrap()])
            .status()
            .unwrap();
        assert!(status.success());
    }
    for name in ["replica_0000.csv", "summary.json", "config.resolved.txt"] {
        let a = std::fs::read(tmp.join("a").join(name)).unwrap();
        let b = std::fs::read(tmp.join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn missing_field_exits_2_and_names_it() {
    let tmp = std::env::temp_dir().join("collidecomm_cli_missing");
    let _ = std::fs::remove_dir_all(&tmp);
    std::fs::create_dir_all(&tmp).unwrap();
    let cfg = write_cfg(&tmp, "[run]\nmode = zero\nplayers = 2\ndelta = 0.005\nhorizon = 10\n");
    let out = bin().args(["run", "--config", cfg.to_str().unwrap()]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("instance.means"), "stderr: {stderr}");
}

#[test]
fn out_of_scope_unknown_players_rejected() {
    let tmp = std::env::temp_dir().join("collidecomm_cli_unknownm");
    let _ = std::fs::remove_dir_all(&tmp);
    std::fs::create_dir_all(&tmp).unwrap();
    let cfg = write_cfg(&tmp, CFG);
    let out = bin()
        .args([
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--override",
            "run.unknown_players=true",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("out of scope"));
}

#[test]
fn override_flags_change_the_run() {
    let tmp = std::env::temp_dir().join("collidecomm_cli_override");
    let _ = std::fs::remove_dir_all(&tmp);
    std::fs::create_dir_all(&tmp).unwrap();
    let cfg = write_cfg(&tmp, CFG);
    let out = tmp.join("out");
    let status = bin()
        .args([
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--horizon",
            "1000",
            "--seed",
            "7",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let resolved = std::fs::read_to_string(out.join("config.resolved.txt")).unwrap();
    assert!(resolved.contains("horizon = 1000"));
    assert!(resolved.contains("seed = 7"));
}

#[test]
fn sweep_emits_one_row_per_horizon_and_replica() {
    let tmp = std::env::temp_dir().join("collidecomm_cli_sweep");
    let _ = std::fs::remove_dir_all(&tmp);
    std::fs::create_dir_all(&tmp).unwrap();
    let cfg = write_cfg(&tmp, CFG);
    let out = tmp.join("out");
    let status = bin()
        .args([
            "sweep",
            "--config",
            cfg.to_str().unwrap(),
            "--horizons",
            "10000,20000,40000",
            "--replicas",
            "2",
            "--out",
            out.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());
    let sweep = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    // hash header + column header + one row per (horizon, replica)
    assert_eq!(sweep.lines().count(), 2 + 3 * 2, "{sweep}");
    assert!(sweep.starts_with("# config_hash="));
}

#[test]
fn verify_oracles_passes() {
    let out = bin().args(["verify", "oracles"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.lines().all(|l| l.is_empty() || l.starts_with("PASS")), "{stdout}");
}
