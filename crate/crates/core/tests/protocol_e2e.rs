//! End-to-end protocol traces on small instances: the full trigger ->
//! synchronize -> collide -> decode -> split pipeline, checked against
//! ground truth.

use collidecomm_core::config::{GridSpec, Mode, RunConfig, StopRule};
use collidecomm_core::diagnostics::{episodes, gap_ratio_3_ok, sandwich_ok};
use collidecomm_core::env::{BanditInstance, RewardFamily};
use collidecomm_core::harness::run;
use collidecomm_core::schedule::{boundary_thresholds, comm_block_len_pulls};

fn zero_cfg(m: u32, k: u32, delta: f64, horizon: u64) -> RunConfig {
    let mut cfg = RunConfig::new(Mode::Zero, m, k, delta, horizon);
    cfg.delta_override = delta > 1.0 / 162.0;
    cfg.stop = StopRule::FirstPartition;
    cfg.grid = GridSpec { dense_until: 0, ratio: 2.0 };
    cfg
}

#[test]
fn zero_mode_first_partition_end_to_end() {
    let cfg = zero_cfg(2, 3, 0.02, 40_000_000);
    let inst = BanditInstance::new(vec![0.9, 0.55, 0.2], 0.0, RewardFamily::Bernoulli).unwrap();
    let params = cfg.params().unwrap();
    let s_b2 = boundary_thresholds(&params).unwrap().s_boundary2;

    let mut good_runs = 0;
    for seed in 0..3u64 {
        let m = run(&cfg, &inst, seed).unwrap();
        assert_eq!(m.rr_collision_violations, 0, "seed {seed}");
        if !m.good_event_held {
            continue;
        }
        good_runs += 1;
        let eps = episodes(&m, &inst);
        let ep = eps.iter().find(|e| e.epoch == 0).expect("first episode");
        assert!(ep.complete, "seed {seed}: group did not finish the split");
        assert!(ep.decoded_ok.values().all(|&b| b), "seed {seed}: decode mismatch");
        assert!(ep.listen_matched.values().all(|&b| b), "seed {seed}: listen != send cycle");
        // the on-trigger pull counts sit in the calibrated window
        for (&p, &s) in &ep.s_first {
            assert!(sandwich_ok(s, ep.max_gap, &params), "seed {seed} player {p}: s_first {s}");
        }
        // listeners need at most 3 probes
        for (&p, &n) in &ep.probes {
            assert!(n <= 3, "seed {seed} player {p}: {n} probes");
        }
        // cycle-ratio bound
        let (sf, sc) = (ep.s_first_comm.unwrap(), ep.s_comm1.unwrap());
        assert!(sf >= s_b2 && sc <= 162 * sf, "seed {seed}: {sc} vs 162*{sf}");
        // communicated partition separates by at least a third of the max gap
        assert!(gap_ratio_3_ok(ep.max_gap, ep.delta_tilde), "seed {seed}");
        // collisions happen only inside on-blocks: each of the (bits + ping)
        // blocks has f cycles, each cycle collides the sender with at most
        // one listener, and a collision flags both parties
        let f = comm_block_len_pulls(sc, &params).unwrap();
        let bound = (3 + 1) * 2 * f;
        assert!(m.collisions_total <= bound, "seed {seed}: {} > {bound}", m.collisions_total);
    }
    assert!(good_runs >= 2, "too many good-event failures: {good_runs}/3");
}

#[test]
fn zero_mode_full_recursion_reaches_exploit() {
    // two splits needed: gaps 0.35 / 0.35; horizon sized from the crossing
    // table (second sub-problem restarts its cycle count from zero)
    let mut cfg = zero_cfg(2, 3, 0.02, 40_000_000);
    cfg.stop = StopRule::Horizon;
    cfg.horizon = 16_000_000;
    let inst = BanditInstance::new(vec![0.9, 0.55, 0.2], 0.0, RewardFamily::Bernoulli).unwrap();
    let m = run(&cfg, &inst, 1).unwrap();
    assert!(m.good_event_held);
    let all = m.exploit_all_round.expect("players settled");
    // zero regret increments after everyone exploits
    assert_eq!(m.cum_regret, m.regret_at_exploit_all, "regret moved after round {all}");
    // everyone exploits, and together they cover exactly the top-2 arms
    assert!(m.final_players.iter().all(|p| p.phase == "exploit"));
    let mut owned: Vec<usize> =
        m.final_players.iter().flat_map(|p| p.arm_set.iter().copied()).collect();
    owned.sort_unstable();
    owned.dedup();
    assert_eq!(owned, vec![0, 1]);
}

#[test]
fn collision_mode_full_pipeline_reaches_exploit() {
    // feasible-horizon collision run: estimation ping ends near 2 * 1.98e6
    // rounds; the second phase then needs its own ladder.
    let mut cfg = RunConfig::new(Mode::Collision, 2, 3, 0.02, 30_000_000);
    cfg.delta_override = true;
    cfg.stop = StopRule::Horizon;
    cfg.grid = GridSpec { dense_until: 0, ratio: 2.0 };
    let inst = BanditInstance::new(vec![0.9, 0.55, 0.2], 0.1, RewardFamily::Bernoulli).unwrap();
    let m = run(&cfg, &inst, 3).unwrap();
    assert_eq!(m.rr_collision_violations, 0);
    assert!(m.good_event_held, "good event failed");
    assert!(
        m.exploit_all_round.is_some(),
        "players never settled; phases: {:?}",
        m.final_players
    );
    assert_eq!(m.cum_regret, m.regret_at_exploit_all);
    // estimation phase produced deliberate collisions
    assert!(m.collisions_estimate_phase > 0);
}

#[test]
fn solo_player_self_splits() {
    let mut cfg = zero_cfg(1, 3, 0.005, 2_000_000);
    cfg.stop = StopRule::Horizon;
    let inst = BanditInstance::new(vec![0.9, 0.5, 0.1], 0.0, RewardFamily::Bernoulli).unwrap();
    let m = run(&cfg, &inst, 5).unwrap();
    assert_eq!(m.collisions_total, 0);
    let all = m.exploit_all_round.expect("solo player settles");
    assert!(all > 0);
    assert_eq!(m.final_players[0].arm_set, vec![0]);
}
