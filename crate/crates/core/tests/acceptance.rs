//! Acceptance gate: every release criterion as one test, each printing a
//! `PASS criterion N` line. Run with
//! `cargo test -p pwave-core --test acceptance -- --nocapture`.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pwave_core::codec::{
    bytes_to_bits, decode_manchester, encode_manchester, frame_duration_s, PvkFrame,
};
use pwave_core::engine::{
    collision_prob_analytic, collision_prob_mc, contributor_for, run_scenario,
    run_scenario_with_traces, seeds, superpose_trace,
};
use pwave_core::monitor::{decode_frame, DecodeStatus, PowerTrace};
use pwave_core::node::{
    charge_time_s, cycle_energy_budget_j, emit_waveform, next_cycle, NodeConfig, NodeState,
};
use pwave_core::rf_link::{
    backscatter_power_dbm, calibrate_leakage, dynamic_range_ceiling_db, dynamic_range_db, fspl_db,
    harvest_dc_power_w, harvest_power_dbm, ReflectionState, RfError, RfParams,
};
use pwave_core::scenario::{load_scenario, parse_scenario};

fn assert_close(actual: f64, expected: f64, tol: f64, what: &str) {
    assert!(
        (actual - expected).abs() <= tol,
        "{what}: got {actual}, expected {expected} (tol {tol})"
    );
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(name)
}

fn random_key(rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut key = vec![0u8; 16];
    rng.fill(&mut key[..]);
    key
}

/// Renders one node's frame window (25 % guard either side) the same way
/// the engine does, so decode behaviour can be probed in isolation.
fn synth_window(
    rf: &RfParams,
    node: &NodeConfig,
    start_s: f64,
    sample_rate_hz: f64,
    rng: &mut ChaCha8Rng,
) -> PowerTrace {
    let wf = emit_waveform(node, start_s).expect("valid node emits");
    let guard = 0.25 * wf.span_s();
    let contributor = contributor_for(rf, node, std::slice::from_ref(&wf), 0.0, f64::INFINITY)
        .expect("valid link budget");
    superpose_trace(
        rf,
        &[contributor],
        start_s - guard,
        wf.end_s() + guard,
        sample_rate_hz,
        node.channel,
        rng,
    )
}

// ---------------------------------------------------------------------------

#[test]
fn criterion_1_link_budget_reference_values() {
    let rf = RfParams::default();

    assert_close(
        fspl_db(rf.freq_hz, rf.distance_m).unwrap(),
        33.497_044_771_549_945,
        1e-9,
        "free-space path loss at 868 MHz / 1.3 m",
    );
    let harvest = harvest_power_dbm(&rf).unwrap();
    assert_close(harvest, -5.20, 0.05, "harvested carrier power, stated tolerance");
    assert_close(
        harvest,
        -5.197_044_771_549_944,
        1e-9,
        "harvested carrier power at the node",
    );
    assert_close(
        backscatter_power_dbm(&rf, ReflectionState::High).unwrap(),
        -30.332_289_803_261_016,
        1e-9,
        "backscatter level, reflective state",
    );
    assert_close(
        backscatter_power_dbm(&rf, ReflectionState::Low).unwrap(),
        -48.394_089_543_099_89,
        1e-9,
        "backscatter level, absorbing state",
    );
    assert_close(
        dynamic_range_ceiling_db(&rf).unwrap(),
        18.061_799_739_838_87,
        1e-9,
        "leakage-free dynamic-range ceiling",
    );
    assert_close(
        harvest_dc_power_w(&rf).unwrap(),
        4.533_011_093_552_596_5e-5,
        1e-15,
        "rectified DC harvest",
    );
    // A link dominated by circulator leakage compresses to hundredths
    // of a dB.
    let leaky = RfParams {
        effective_leakage_dbm: -2.0,
        ..rf
    };
    assert_close(
        dynamic_range_db(&leaky).unwrap(),
        0.006_271_801_665_026_382,
        1e-12,
        "dynamic range under -2 dBm leakage",
    );

    println!("PASS criterion 1: link-budget reference values reproduced");
}

#[test]
fn criterion_2_manchester_codec() {
    // Worked byte: 0xB3 = 1011_0011 MSB-first; a 1-bit encodes
    // low-then-high (01), a 0-bit high-then-low (10).
    let chips = encode_manchester(&bytes_to_bits(&[0xB3]));
    assert_eq!(
        chips.as_slice(),
        &[0, 1, 1, 0, 0, 1, 0, 1, 1, 0, 1, 0, 0, 1, 0, 1],
        "reference chip expansion of 0xB3"
    );

    // Strict round trip over at least a thousand random keys.
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0DEC);
    for i in 0..1200 {
        let key = random_key(&mut rng);
        let bits = bytes_to_bits(&key);
        let encoded = encode_manchester(&bits);
        assert_eq!(encoded.len(), 256, "16-byte key spans 256 chips");
        let ones = encoded.as_slice().iter().filter(|&&c| c != 0).count();
        assert_eq!(ones * 2, encoded.len(), "DC balance (trial {i})");
        let decoded = decode_manchester(encoded.as_slice()).expect("clean chips decode");
        assert_eq!(decoded, bits, "round trip (trial {i})");
    }

    assert_close(
        frame_duration_s(16, 0, 100.0e3).unwrap(),
        2.56e-3,
        1e-12,
        "16-byte frame at 100 kHz chips",
    );
    assert_close(
        frame_duration_s(16, 0, 40.0e3).unwrap(),
        6.4e-3,
        1e-12,
        "16-byte frame at 40 kHz chips",
    );

    println!("PASS criterion 2: Manchester codec round trip and frame timing");
}

#[test]
fn criterion_3_energy_cycle_timing() {
    let frame = PvkFrame::new(vec![0x5A; 16], 40.0e3);
    let cfg = NodeConfig::new("n", frame);
    let budget = cycle_energy_budget_j(&cfg);
    assert_close(budget, 4.576e-4, 1e-10, "per-cycle energy budget");

    let harvest_w = harvest_dc_power_w(&RfParams::default()).unwrap();
    let t_charge = charge_time_s(budget, harvest_w).unwrap();
    assert_close(t_charge, 10.094_835_211_209_933, 1e-9, "recharge time");
    let period = t_charge + cfg.frame.duration_s().unwrap() + cfg.task_delay_s;
    assert_close(period, 10.1, 0.1, "full cycle period");

    // Count complete duty cycles in a 100 s run (jitter-free).
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut state = NodeState::initial(&cfg);
    let mut now = 0.0;
    let mut cycles = 0;
    loop {
        let (outcome, next) = next_cycle(&state, &cfg, harvest_w, now, &mut rng).unwrap();
        if outcome.broadcast_time_s > 100.0 {
            break;
        }
        cycles += 1;
        now = outcome.broadcast_time_s;
        state = next;
    }
    assert_eq!(cycles, 9, "nine full harvest-broadcast cycles in 100 s");

    println!("PASS criterion 3: duty-cycle energy budget and cadence");
}

#[test]
fn criterion_4_leakage_calibration() {
    let rf = RfParams::default();
    let leak = calibrate_leakage(&rf, 0.15).unwrap();
    assert_close(leak, -15.87, 0.05, "calibrated leakage near -15.87 dBm");
    assert_close(leak, -15.861_392_614_708_262, 1e-9, "calibrated leakage, exact");

    let round_trip = dynamic_range_db(&RfParams {
        effective_leakage_dbm: leak,
        ..rf.clone()
    })
    .unwrap();
    assert_close(round_trip, 0.15, 0.005, "round-trip dynamic range");
    assert_close(round_trip, 0.15, 1e-6, "round trip is tight, not just close");

    // Targets above the leakage-free ceiling are impossible by construction.
    match calibrate_leakage(&rf, 19.0) {
        Err(RfError::UnreachableTarget { .. }) => {}
        other => panic!("expected UnreachableTarget, got {other:?}"),
    }

    println!("PASS criterion 4: leakage calibration hits the target dynamic range");
}

#[test]
fn criterion_5_reference_scenario_and_attacker() {
    let started = Instant::now();

    let cfg = load_scenario(&fixture("default.json")).unwrap();
    let report = run_scenario(&cfg).unwrap();
    let n = &report.nodes[0];
    assert_eq!(n.node_id, "node-1");
    assert!(n.cycles >= 9, "at least nine duty cycles, got {}", n.cycles);
    assert_eq!(n.frames_decoded, n.frames_emitted, "every frame decoded");
    assert_eq!(n.accepts, n.broadcasts, "every broadcast authenticated");
    assert!(n.rejects.is_empty(), "no rejects in the clean run: {:?}", n.rejects);
    assert_eq!(report.collision_events, 0);
    assert_close(
        report.mean_measured_dr_db.unwrap(),
        0.15,
        0.01,
        "measured dynamic range tracks the calibration target",
    );

    let cfg = load_scenario(&fixture("attacker.json")).unwrap();
    let report = run_scenario(&cfg).unwrap();
    let legit = report.nodes.iter().find(|n| n.node_id == "node-1").unwrap();
    let rogue = report.nodes.iter().find(|n| n.node_id == "rogue").unwrap();
    assert_eq!(legit.accepts, legit.broadcasts, "legitimate node still accepted");
    assert!(legit.accepts >= 9);
    assert_eq!(rogue.frames_emitted, 0, "attacker cannot modulate the carrier");
    assert_eq!(rogue.accepts, 0, "attacker acceptance rate is zero");
    assert_eq!(rogue.broadcasts, 4, "attacker completes four cycles in 100 s");
    assert_eq!(
        rogue.rejects.get("no_frame").copied().unwrap_or(0),
        rogue.broadcasts,
        "every attacker broadcast rejected for lack of a frame: {:?}",
        rogue.rejects
    );

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 10.0,
        "both reference runs must finish within 10 s, took {elapsed:?}"
    );

    println!(
        "PASS criterion 5: reference scenario authenticates, attacker shut out ({:.2} s)",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_6_collision_statistics() {
    let started = Instant::now();

    let analytic = collision_prob_analytic(2, 6.4e-3, 10.0).unwrap();
    assert_close(analytic, 1.28e-3, 1e-12, "pairwise collision probability");

    let est = collision_prob_mc(2, 6.4e-3, 10.0, 1_000_000, 20_260_817).unwrap();
    assert!(est.stderr > 0.0, "nonzero estimate has nonzero spread");
    assert!(
        (est.probability - analytic).abs() <= 3.0 * est.stderr,
        "Monte-Carlo {} vs analytic {analytic} exceeds 3 sigma ({})",
        est.probability,
        est.stderr
    );

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 30.0,
        "a million trials must finish within 30 s, took {elapsed:?}"
    );

    println!(
        "PASS criterion 6: collision analytics and Monte-Carlo agree ({:.2} s, p = {:.6})",
        elapsed.as_secs_f64(),
        est.probability
    );
}

#[test]
fn criterion_7_collision_mitigation() {
    let started = Instant::now();
    let two_nodes = |channel_b: u32, mode: &str| {
        parse_scenario(&format!(
            r#"{{
                "rf": {{ "noise_sigma_db": 0.0 }},
                "nodes": [
                    {{ "node_id": "a", "key_hex": "00112233445566778899aabbccddeeff" }},
                    {{ "node_id": "b", "key_hex": "a1b2c3d4e5f60718293a4b5c6d7e8f90", "channel": {channel_b} }}
                ],
                "duration_s": 12.0,
                "seed": 5,
                "mode": {mode},
                "sample_rate_hz": 400000.0
            }}"#
        ))
        .unwrap()
    };

    // Identical nodes wake together: co-channel frames collide and corrupt.
    let report = run_scenario(&two_nodes(0, "\"free_running\"")).unwrap();
    assert!(report.collision_events >= 1, "co-channel frames must overlap");
    let corrupted: u64 = report.nodes.iter().map(|n| n.frames_corrupted).sum();
    assert!(
        corrupted >= 1,
        "overlap must surface as chip errors: {report:?}"
    );

    // Slotted access with distinct slots removes every overlap.
    let slotted = two_nodes(
        0,
        r#"{ "slotted": { "slot_period_s": 0.01,
                          "slot_assignments": { "a": 0, "b": 1 } } }"#,
    );
    let report = run_scenario(&slotted).unwrap();
    assert_eq!(report.collision_events, 0, "distinct slots cannot overlap");
    for n in &report.nodes {
        assert_eq!(n.frames_decoded, n.frames_emitted, "slotted decode for {}", n.node_id);
        assert_eq!(n.accepts, n.broadcasts, "slotted accept for {}", n.node_id);
    }

    // Frequency separation fixes the same simultaneous schedule.
    let report = run_scenario(&two_nodes(1, r#"{ "fdm": { "channels": 2 } }"#)).unwrap();
    assert_eq!(report.collision_events, 0, "distinct channels cannot collide");
    for n in &report.nodes {
        assert_eq!(n.frames_decoded, n.frames_emitted, "fdm decode for {}", n.node_id);
        assert_eq!(n.accepts, n.broadcasts, "fdm accept for {}", n.node_id);
    }

    let elapsed = started.elapsed();
    assert!(
        elapsed.as_secs_f64() < 5.0,
        "mitigation comparison must finish within 5 s, took {elapsed:?}"
    );

    println!(
        "PASS criterion 7: slotting and frequency separation both defeat collisions ({:.2} s)",
        elapsed.as_secs_f64()
    );
}

#[test]
fn criterion_8_system_properties() {
    // Codec-level round trip over at least a thousand random keys.
    let mut rng = ChaCha8Rng::seed_from_u64(0x0517);
    for _ in 0..1000 {
        let key = random_key(&mut rng);
        let bits = bytes_to_bits(&key);
        assert_eq!(
            decode_manchester(encode_manchester(&bits).as_slice()).unwrap(),
            bits,
            "Manchester round trip"
        );
    }

    // (a) Zero-noise completeness: any key decodes exactly whenever the
    // link's dynamic range clears the detector floor, including far
    // placements that compress it toward the floor.
    let quiet = RfParams {
        noise_sigma_db: 0.0,
        ..RfParams::default()
    };
    let mut key_rng = ChaCha8Rng::seed_from_u64(0xACCE97);
    for distance_m in [1.3, 2.0] {
        let rf = quiet.with_distance(distance_m);
        assert!(
            dynamic_range_db(&rf).unwrap() >= 0.01,
            "precondition: dynamic range clears the floor at {distance_m} m"
        );
        for _ in 0..20 {
            let key = random_key(&mut key_rng);
            let node = NodeConfig::new("n", PvkFrame::new(key.clone(), 40.0e3));
            let mut rng = seeds::trace_stream(0, 0, 0);
            let trace = synth_window(&rf, &node, 0.05, 1.0e6, &mut rng);
            let result = decode_frame(&trace, &node.frame).unwrap();
            assert_eq!(result.status, DecodeStatus::Decoded, "complete at {distance_m} m");
            assert_eq!(result.key.as_deref(), Some(&key[..]), "exact key");
        }
    }

    // (b) Threshold shift-invariance: a flat gain change moves every
    // sample identically and cannot alter the decoded key.
    let key = random_key(&mut key_rng);
    let node = NodeConfig::new("n", PvkFrame::new(key.clone(), 40.0e3));
    let mut rng = seeds::trace_stream(0, 0, 1);
    let mut trace = synth_window(&quiet, &node, 0.05, 1.0e6, &mut rng);
    let baseline = decode_frame(&trace, &node.frame).unwrap();
    for s in trace.samples_dbm.iter_mut() {
        *s += 17.3;
    }
    let shifted = decode_frame(&trace, &node.frame).unwrap();
    assert_eq!(baseline.status, DecodeStatus::Decoded);
    assert_eq!(shifted.status, DecodeStatus::Decoded);
    assert_eq!(shifted.key, baseline.key, "gain shift must not change the key");
    assert_close(
        shifted.measured_dr_db,
        baseline.measured_dr_db,
        1e-9,
        "dynamic range is a ratio, immune to flat gain",
    );

    // (c) Superposition is linear in milliwatts at zero noise:
    // lin(A∪B) + lin(∅) = lin(A) + lin(B) per sample.
    use pwave_core::rf_link::dbm_to_mw;
    let node_a = NodeConfig::new("a", PvkFrame::new(random_key(&mut key_rng), 40.0e3));
    let node_b = NodeConfig::new("b", PvkFrame::new(random_key(&mut key_rng), 40.0e3));
    let wf_a = emit_waveform(&node_a, 0.0012).unwrap();
    let wf_b = emit_waveform(&node_b, 0.0040).unwrap();
    let ca = contributor_for(&quiet, &node_a, std::slice::from_ref(&wf_a), 0.0, 0.012).unwrap();
    let cb = contributor_for(&quiet, &node_b, std::slice::from_ref(&wf_b), 0.0, 0.012).unwrap();
    let mut rng = seeds::trace_stream(0, 0, 2);
    let both = superpose_trace(&quiet, &[ca.clone(), cb.clone()], 0.0, 0.012, 0.5e6, 0, &mut rng);
    let only_a = superpose_trace(&quiet, &[ca], 0.0, 0.012, 0.5e6, 0, &mut rng);
    let only_b = superpose_trace(&quiet, &[cb], 0.0, 0.012, 0.5e6, 0, &mut rng);
    let floor_mw = dbm_to_mw(quiet.effective_leakage_dbm);
    for i in 0..both.len() {
        let lhs = dbm_to_mw(both.samples_dbm[i]) + floor_mw;
        let rhs = dbm_to_mw(only_a.samples_dbm[i]) + dbm_to_mw(only_b.samples_dbm[i]);
        assert_close(lhs, rhs, 1e-15, "superposition linearity");
    }

    // (d) Determinism: identical config and seed reproduce byte-identical
    // reports and byte-identical trace files.
    let cfg = load_scenario(&fixture("default.json")).unwrap();
    let dir1 = tempfile::tempdir().unwrap();
    let dir2 = tempfile::tempdir().unwrap();
    let r1 = run_scenario_with_traces(&cfg, dir1.path()).unwrap();
    let r2 = run_scenario_with_traces(&cfg, dir2.path()).unwrap();
    assert_eq!(r1.to_json_string(), r2.to_json_string(), "byte-identical reports");
    assert!(!r1.trace_files.is_empty());
    for name in &r1.trace_files {
        let b1 = std::fs::read(dir1.path().join(name)).unwrap();
        let b2 = std::fs::read(dir2.path().join(name)).unwrap();
        assert_eq!(b1, b2, "byte-identical trace {name}");
    }

    // (e) Chip-error rate grows with sensing noise (one adjacent
    // inversion tolerated as Monte-Carlo slack; the ends must order).
    let sigmas = [0.0, 0.03, 0.06, 0.09, 0.13, 0.18];
    let mut rates = Vec::new();
    for (level, sigma) in sigmas.iter().enumerate() {
        let rf = RfParams {
            noise_sigma_db: *sigma,
            ..RfParams::default()
        };
        let mut total_errors = 0u64;
        let frames = 200;
        for i in 0..frames {
            let key = random_key(&mut key_rng);
            let node = NodeConfig::new("n", PvkFrame::new(key, 40.0e3));
            let mut rng = seeds::trace_stream(11, 0, (level * 1000 + i) as u64);
            let trace = synth_window(&rf, &node, 0.03, 400.0e3, &mut rng);
            total_errors += match decode_frame(&trace, &node.frame) {
                Ok(res) => match res.status {
                    DecodeStatus::Decoded => 0,
                    DecodeStatus::ChipErrors { count, .. } => count as u64,
                    DecodeStatus::NoFrame => 128,
                },
                Err(_) => 128, // detection ran off the trace: total loss
            };
        }
        rates.push(total_errors as f64 / frames as f64);
    }
    let inversions = rates
        .windows(2)
        .filter(|w| w[1] < w[0] - 1e-9)
        .count();
    assert!(
        inversions <= 1,
        "chip-error rate must grow with noise: {rates:?}"
    );
    assert!(
        rates.last().unwrap() > rates.first().unwrap(),
        "noisiest level must outscore the quietest: {rates:?}"
    );

    println!("PASS criterion 8: completeness, invariance, linearity, determinism, noise monotonicity");
}
