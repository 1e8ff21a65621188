//! Property batteries behind the `verify` CLI subcommand: oracle
//! equivalences, lemma-level checks on seeded runs, and protocol-level
//! round-trip/recovery checks.

use crate::comm::encode;
use crate::config::{GridSpec, Mode, RunConfig, StopRule};
use crate::connectivity::{build_graph, ArmStats};
use crate::diagnostics::{
    episodes, gap_ratio_3_ok, ratio_162_ok, sandwich_ok, witness_collision_ok, witness_zero_ok,
};
use crate::env::{BanditInstance, RewardFamily};
use crate::harness::run_batch;
use crate::oracle::{bernstein_coverage_oracle, components_oracle, power_oracle, BandSide};
use crate::rng::Rng;
use crate::schedule::{boundary_thresholds, unique_power_in_interval, ConfidenceParams};

#[derive(Debug, Clone)]
pub struct PropertyResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl PropertyResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        PropertyResult { name, passed, detail }
    }
}

/// Oracle suite: power uniqueness, connectivity equivalence, Bernstein
/// coverage (both band sides).
pub fn verify_oracles() -> Vec<PropertyResult> {
    let mut out = Vec::new();

    let mut rng = Rng::seed_from(0xC0FFEE);
    let mut ok = true;
    for _ in 0..10_000 {
        let x = 10f64.powf(-3.0 + 12.0 * rng.next_f64());
        let base = 2 + (rng.next_u64() % 9);
        if power_oracle(x, base) != unique_power_in_interval(x, base) {
            ok = false;
            break;
        }
    }
    out.push(PropertyResult::new(
        "power-uniqueness-oracle-equivalence",
        ok,
        "10000 random (x, base) cases".into(),
    ));

    let params = ConfidenceParams::new(3, 12, 0.005).unwrap();
    let mut ok = true;
    let mut cases = 0;
    for case in 0..1000u64 {
        let mut rng = Rng::seed_from(1000 + case);
        let k = 2 + (rng.next_u64() % 11) as usize;
        let stats: Vec<ArmStats> = (0..k)
            .map(|_| ArmStats::with_mean(1 + rng.next_u64() % 100_000, rng.next_f64()))
            .collect();
        let g = build_graph(&stats, 10.0, &params);
        if components_oracle(&g.intervals) != g.components {
            ok = false;
            break;
        }
        cases += 1;
    }
    out.push(PropertyResult::new(
        "connectivity-oracle-equivalence",
        ok,
        format!("{cases} random interval sets matched"),
    ));

    let lower = bernstein_coverage_oracle(0.5, 10_000, 0.05, 1000, BandSide::Lower, 2024);
    out.push(PropertyResult::new(
        "bernstein-lower-coverage",
        lower <= 0.05,
        format!("violation fraction {lower:.4} (budget 0.05)"),
    ));
    let upper = bernstein_coverage_oracle(0.5, 10_000, 0.05, 1000, BandSide::Upper, 2025);
    out.push(PropertyResult::new(
        "bernstein-upper-coverage",
        upper <= 0.05,
        format!("violation fraction {upper:.4} (budget 0.05)"),
    ));

    let mut rng = Rng::seed_from(31);
    let mut ok = true;
    let mut cases = 0u64;
    for _ in 0..100 {
        let c = 0.5 + 10.0 * rng.next_f64();
        let b = (std::f64::consts::E / c).max(4.0 / c) + 50.0 * rng.next_f64();
        ok &= crate::oracle::log_inversion_oracle(b, c).is_ok();
        cases += 1;
    }
    out.push(PropertyResult::new(
        "log-inversion-bound",
        ok,
        format!("{cases} random (b, c) pairs scanned"),
    ));
    out
}

/// A small, fast zero-mode scenario the lemma checks run on.
fn lemma_scenario() -> (RunConfig, BanditInstance) {
    let mut cfg = RunConfig::new(Mode::Zero, 2, 3, 0.02, 40_000_000);
    cfg.delta_override = true;
    cfg.stop = StopRule::FirstPartition;
    cfg.grid = GridSpec { dense_until: 0, ratio: 2.0 };
    let inst =
        BanditInstance::new(vec![0.9, 0.55, 0.2], 0.0, RewardFamily::Bernoulli).unwrap();
    (cfg, inst)
}

/// Lemma suite: trigger sandwich, 162-cycle ratio, witness interval and
/// partition-gap bound on seeded end-to-end runs.
pub fn verify_lemmas(seeds: u64) -> Vec<PropertyResult> {
    let (cfg, inst) = lemma_scenario();
    let params = cfg.params().unwrap();
    let s_b2 = boundary_thresholds(&params).unwrap().s_boundary2;
    let jobs = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(2);
    let runs = run_batch(&cfg, &inst, 99, seeds, jobs).expect("scenario runs");

    let mut sandwich = (0u64, 0u64);
    let mut ratio = (0u64, 0u64);
    let mut witness = (0u64, 0u64);
    let mut gap3 = (0u64, 0u64);
    let mut member = (0u64, 0u64);
    for m in &runs {
        if !m.good_event_held {
            continue;
        }
        for ep in episodes(m, &inst).iter().filter(|e| e.epoch == 0) {
            for &s in ep.s_first.values() {
                sandwich.1 += 1;
                sandwich.0 += sandwich_ok(s, ep.max_gap, &params) as u64;
            }
            if let (Some(sf), Some(sc)) = (ep.s_first_comm, ep.s_comm1) {
                if let Some(ok) = ratio_162_ok(sf, sc, s_b2) {
                    ratio.1 += 1;
                    ratio.0 += ok as u64;
                }
            }
            if let Some(arm) = ep.channel_arm {
                let mu = inst.means()[arm];
                member.1 += 1;
                // every listener that matched the send cycle saw the channel
                // arm among its inspected arms
                let n_listeners = ep.listen_matched.values().filter(|&&b| b).count();
                if ep.channel_witnesses.len() == n_listeners {
                    member.0 += 1;
                }
                for &w in &ep.channel_witnesses {
                    witness.1 += 1;
                    witness.0 += witness_zero_ok(w, mu) as u64;
                }
            }
            if ep.complete && ep.decoded_ok.values().all(|&b| b) {
                gap3.1 += 1;
                gap3.0 += gap_ratio_3_ok(ep.max_gap, ep.delta_tilde) as u64;
            }
        }
    }

    let mut out = vec![
        PropertyResult::new(
            "trigger-sandwich-128-1152",
            sandwich.0 == sandwich.1 && sandwich.1 > 0,
            format!("{}/{} player triggers inside the window", sandwich.0, sandwich.1),
        ),
        PropertyResult::new(
            "send-cycle-ratio-162",
            ratio.0 == ratio.1 && ratio.1 > 0,
            format!("{}/{} episodes", ratio.0, ratio.1),
        ),
        PropertyResult::new(
            "witness-interval-third-to-half",
            witness.0 == witness.1 && witness.1 > 0,
            format!("{}/{} listener witnesses", witness.0, witness.1),
        ),
        PropertyResult::new(
            "channel-arm-in-inspected-set",
            member.0 == member.1 && member.1 > 0,
            format!("{}/{} episodes", member.0, member.1),
        ),
        PropertyResult::new(
            "partition-gap-ratio-3",
            gap3.0 == gap3.1 && gap3.1 > 0,
            format!("{}/{} successful communications", gap3.0, gap3.1),
        ),
    ];
    out.push(collision_witness_battery(seeds.clamp(1, 3)));
    out
}

/// Unknown-collision-reward battery: the estimation-phase witnesses of the
/// channel arm stay inside the blowup-10 band around the midpoint between
/// the arm mean and the collision mean.
fn collision_witness_battery(seeds: u64) -> PropertyResult {
    let mut cfg = RunConfig::new(Mode::Collision, 2, 3, 0.02, 30_000_000);
    cfg.delta_override = true;
    cfg.stop = StopRule::Horizon;
    cfg.grid = GridSpec { dense_until: 0, ratio: 2.0 };
    let inst =
        BanditInstance::new(vec![0.9, 0.55, 0.2], 0.1, RewardFamily::Bernoulli).unwrap();
    let jobs = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(2);
    let runs = run_batch(&cfg, &inst, 77, seeds, jobs).expect("scenario runs");
    let mut checked = 0u64;
    let mut ok = 0u64;
    let mut settled = 0u64;
    for m in &runs {
        if !m.good_event_held {
            continue;
        }
        settled += m.exploit_all_round.is_some() as u64;
        for ep in episodes(m, &inst) {
            let Some(arm) = ep.channel_arm else { continue };
            let mu = inst.means()[arm];
            for &w in &ep.channel_witnesses_estimate {
                checked += 1;
                ok += witness_collision_ok(w, mu, inst.collision_mean()) as u64;
            }
        }
    }
    PropertyResult::new(
        "collision-witness-interval-r16",
        checked > 0 && ok == checked && settled > 0,
        format!("{ok}/{checked} witnesses in band, {settled}/{seeds} runs settled"),
    )
}

/// Protocol suite: exhaustive encode round-trip plus an end-to-end message
/// recovery rate on the lemma scenario.
pub fn verify_protocol(seeds: u64) -> Vec<PropertyResult> {
    let mut out = Vec::new();

    let mut ok = true;
    let mut cases = 0u64;
    for arm_count in 2..=10usize {
        for mask in 1u32..((1 << arm_count) - 1) {
            let subset: Vec<usize> = (0..arm_count).filter(|&i| mask & (1 << i) != 0).collect();
            let msg = encode(&subset, arm_count).unwrap();
            if msg.member_set() != subset || msg.is_malformed() {
                ok = false;
            }
            cases += 1;
        }
    }
    out.push(PropertyResult::new(
        "encode-decode-exhaustive",
        ok,
        format!("{cases} proper subsets round-tripped"),
    ));

    let (cfg, inst) = lemma_scenario();
    let jobs = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(2);
    let runs = run_batch(&cfg, &inst, 1234, seeds, jobs).expect("scenario runs");
    let mut recovered = 0u64;
    for m in &runs {
        let eps = episodes(m, &inst);
        let ok = eps.iter().filter(|e| e.epoch == 0).all(|e| {
            e.complete
                && e.decoded_ok.values().all(|&b| b)
                && e.listen_matched.values().all(|&b| b)
        }) && eps.iter().any(|e| e.epoch == 0);
        recovered += ok as u64;
    }
    let rate = recovered as f64 / seeds as f64;
    out.push(PropertyResult::new(
        "message-recovery-rate",
        rate >= 0.9,
        format!("{recovered}/{seeds} runs recovered exactly (rate {rate:.3})"),
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_suite_passes() {
        for r in verify_oracles() {
            assert!(r.passed, "{}: {}", r.name, r.detail);
        }
    }
}
