//! Saturated-traffic fixtures that exercise the contention model.

use zdsim_core::config::FlowSpec;
use zdsim_core::scenarios::{fixture_simulation, hidden_terminal_config};
use zdsim_core::{Fixture, RunConfig};

#[test]
fn rts_cts_removes_hidden_terminal_data_collisions() {
    for seed in 1..=3 {
        let (cfg, fx) = hidden_terminal_config(false, seed);
        let plain = fixture_simulation(&cfg, &fx).run();
        assert!(plain.data_collisions > 0, "seed {seed}");

        let (cfg, fx) = hidden_terminal_config(true, seed);
        let mut sim = fixture_simulation(&cfg, &fx);
        sim.mac_mut().enable_audit();
        let guarded = sim.run();
        assert_eq!(guarded.data_collisions, 0, "seed {seed}");
        assert!(guarded.delivered > plain.delivered);
    }
}

fn two_flows(extra_edges: &str, seed: u64) -> Vec<u64> {
    let fx = Fixture::parse(&format!("A1 B1\nB1 C1\nA2 B2\nB2 C2\n{extra_edges}")).unwrap();
    let mut cfg = RunConfig::default();
    cfg.run.seed = seed;
    cfg.run.horizon_s = 4.0;
    cfg.energy.initial_j = 1e9;
    cfg.traffic.random_flows = 0;
    cfg.traffic.flows = [("A1", "C1"), ("A2", "C2")]
        .iter()
        .map(|(s, d)| FlowSpec {
            src: s.to_string(),
            dst: d.to_string(),
            rate_bps: Some(1_500_000.0),
            packet_bytes: Some(512),
            start_s: Some(0.5),
            stop_s: None,
        })
        .collect();
    let mut sim = fixture_simulation(&cfg, &fx);
    sim.enable_delivery_log();
    sim.run();
    let mut per_flow = vec![0; 2];
    for d in sim.delivery_log() {
        per_flow[d.flow as usize] += 1;
    }
    per_flow
}

#[test]
fn zone_adjacent_flows_lose_throughput() {
    for seed in 1..=3 {
        let apart = two_flows("", seed);
        let adjacent = two_flows("B1 B2\n", seed);
        for f in 0..2 {
            assert!(
                adjacent[f] < apart[f],
                "seed {seed} flow {f}: {adjacent:?} vs {apart:?}"
            );
        }
    }
}
