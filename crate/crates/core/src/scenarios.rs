//! Ready-made scenarios shared by the tests, the CLI and the benchmarks.

#![allow(clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Protocol, RunConfig};
use crate::engine::SimTime;
use crate::fixture::Fixture;
use crate::oracle::{self, FrozenGraph, OracleParams};
use crate::routing::Candidate;
use crate::sim::Simulation;
use crate::world::{Arena, NodeId, World};

fn fixture_arena() -> Arena {
    Arena {
        width: 1000.0,
        height: 1000.0,
        radio_range: 250.0,
    }
}

/// Discovery-only configuration on a static fixture: ideal channel, no
/// traffic, energy off.
pub fn discovery_config(protocol: Protocol, k: usize) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.run.protocol = protocol;
    cfg.run.horizon_s = 2.0;
    cfg.mac.ideal_channel = true;
    cfg.routing.k_paths = k;
    cfg.routing.query_timer_ms = 15.0;
    cfg.traffic.random_flows = 0;
    cfg.mobility.v_min_mps = 0.0;
    cfg.mobility.v_max_mps = 0.0;
    cfg
}

/// Outcome of a single discovery on a static graph.
#[derive(Clone, Debug)]
pub struct Discovery {
    /// Replies in arrival order.
    pub candidates: Vec<Candidate>,
    pub selected: Vec<Candidate>,
    pub trace: Vec<String>,
    pub events: u64,
}

impl Discovery {
    pub fn routes(&self) -> Vec<(Vec<NodeId>, u32)> {
        self.candidates
            .iter()
            .map(|c| (c.route.clone(), c.anc))
            .collect()
    }

    pub fn selected_routes(&self) -> Vec<Vec<NodeId>> {
        self.selected.iter().map(|c| c.route.clone()).collect()
    }
}

/// Floods one route request from `src` to `dst` over `fx` and collects what
/// the source learned.
pub fn discover_on(fx: &Fixture, src: NodeId, dst: NodeId, cfg: &RunConfig) -> Discovery {
    let world = World::from_fixture(fixture_arena(), fx);
    let mut sim = Simulation::with_world(cfg, world).expect("discovery config is valid");
    sim.enable_trace();
    sim.discover(src, dst);
    sim.run_until(cfg.horizon());
    let route = sim.router().source_route(src, dst);
    Discovery {
        candidates: route.map(|r| r.candidates.clone()).unwrap_or_default(),
        selected: route.map(|r| r.selected.clone()).unwrap_or_default(),
        trace: sim.trace_lines(),
        events: sim.events_executed(),
    }
}

/// The worked example: S floods towards D on the seven-node topology.
pub fn worked_example_discovery(protocol: Protocol, k: usize) -> Discovery {
    let fx = oracle::worked_example_fixture();
    let s = fx.id("S").expect("S");
    let d = fx.id("D").expect("D");
    discover_on(&fx, s, d, &discovery_config(protocol, k))
}

/// Oracle parameters matching [`discovery_config`].
pub fn oracle_params(cfg: &RunConfig) -> OracleParams {
    OracleParams {
        query_timer: cfg.routing.query_timer(),
        default_latency: SimTime(cfg.mac.ideal_latency_us),
        rebroadcast_cap: cfg.routing.rebroadcast_cap,
        ttl_max: cfg.routing.ttl_max,
    }
}

/// A connected random graph of `n` nodes with edge probability `p` and
/// latencies drawn from [1000, 5000] µs. The source is node 0 and the
/// destination the node farthest from it in hops.
pub fn random_graph(seed: u64, n: usize, p: f64) -> FrozenGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let mut adj = vec![vec![false; n]; n];
        // A random spanning tree first keeps every draw connected.
        for v in 1..n {
            let u = rng.gen_range(0..v);
            adj[u][v] = true;
            adj[v][u] = true;
        }
        for a in 0..n {
            for b in a + 1..n {
                if !adj[a][b] && rng.gen_bool(p) {
                    adj[a][b] = true;
                    adj[b][a] = true;
                }
            }
        }
        let mut latency = std::collections::BTreeMap::new();
        for a in 0..n {
            for b in a + 1..n {
                if adj[a][b] {
                    latency.insert(
                        (NodeId(a as u32), NodeId(b as u32)),
                        SimTime(rng.gen_range(1000..=5000)),
                    );
                }
            }
        }
        let src = NodeId(0);
        let dst = farthest(&adj, 0);
        if dst == src {
            continue;
        }
        return FrozenGraph {
            names: (0..n).map(|i| format!("n{i}")).collect(),
            adj,
            latency,
            src,
            dst,
        };
    }
}

fn farthest(adj: &[Vec<bool>], from: usize) -> NodeId {
    let n = adj.len();
    let mut dist = vec![usize::MAX; n];
    dist[from] = 0;
    let mut queue = std::collections::VecDeque::from([from]);
    let mut last = from;
    while let Some(u) = queue.pop_front() {
        last = u;
        for v in 0..n {
            if adj[u][v] && dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    NodeId(last as u32)
}

/// Graphs for the oracle comparison: seeded, 6 to 12 nodes, redrawn until the
/// propagation order is unambiguous.
pub fn oracle_graph(seed: u64) -> FrozenGraph {
    let params = oracle_params(&discovery_config(Protocol::ZdAomdv, 3));
    let mut attempt = 0u64;
    loop {
        let s = seed.wrapping_mul(1_000_003).wrapping_add(attempt);
        let n = 6 + (s % 7) as usize;
        let g = random_graph(s, n, 0.3);
        if oracle::oracle_anc(&g, &params).is_ok() {
            return g;
        }
        attempt += 1;
    }
}

/// Graphs for the zone-disjointness comparison: at least three simple
/// source-destination paths.
pub fn multipath_graph(seed: u64) -> FrozenGraph {
    let mut attempt = 0u64;
    loop {
        let s = seed.wrapping_mul(7_919).wrapping_add(attempt);
        let n = 8 + (s % 5) as usize;
        let g = random_graph(s, n, 0.25);
        if g.simple_paths().len() >= 3 && !g.adjacent(g.src, g.dst) {
            return g;
        }
        attempt += 1;
    }
}

/// A static snapshot of the mobile scenario: `n` nodes placed uniformly in a
/// `side` x `side` square, linked within `range`, latencies from [1000, 5000]
/// µs. Source and destination are the two nodes farthest apart. Redrawn until
/// connected.
pub fn geometric_graph(seed: u64, n: usize, side: f64, range: f64) -> FrozenGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let pts: Vec<(f64, f64)> = (0..n)
            .map(|_| (rng.gen_range(0.0..side), rng.gen_range(0.0..side)))
            .collect();
        let dist = |a: usize, b: usize| (pts[a].0 - pts[b].0).hypot(pts[a].1 - pts[b].1);
        let mut adj = vec![vec![false; n]; n];
        let mut latency = std::collections::BTreeMap::new();
        let mut far = (0, 0, -1.0);
        for a in 0..n {
            for b in a + 1..n {
                let d = dist(a, b);
                if d <= range {
                    adj[a][b] = true;
                    adj[b][a] = true;
                    latency.insert(
                        (NodeId(a as u32), NodeId(b as u32)),
                        SimTime(rng.gen_range(1000..=5000)),
                    );
                }
                if d > far.2 {
                    far = (a, b, d);
                }
            }
        }
        let g = FrozenGraph {
            names: (0..n).map(|i| format!("n{i}")).collect(),
            adj,
            latency,
            src: NodeId(far.0 as u32),
            dst: NodeId(far.1 as u32),
        };
        if n >= 2 && g.is_connected() {
            return g;
        }
    }
}

/// Two senders out of each other's range share one receiver. Both send
/// saturating CBR traffic to the middle node.
pub fn hidden_terminal_config(rts_cts: bool, seed: u64) -> (RunConfig, Fixture) {
    let fx = Fixture::parse("A B\nB C\n").expect("static fixture");
    let mut cfg = RunConfig::default();
    cfg.run.seed = seed;
    cfg.run.horizon_s = 5.0;
    cfg.mac.rts_cts = rts_cts;
    cfg.mac.rts_threshold_bytes = 0;
    cfg.energy.initial_j = 1e9;
    cfg.traffic.random_flows = 0;
    cfg.traffic.flows = ["A", "C"]
        .iter()
        .map(|s| crate::config::FlowSpec {
            src: s.to_string(),
            dst: "B".into(),
            rate_bps: Some(1_000_000.0),
            packet_bytes: Some(512),
            start_s: Some(0.5),
            stop_s: None,
        })
        .collect();
    (cfg, fx)
}

pub fn fixture_simulation(cfg: &RunConfig, fx: &Fixture) -> Simulation {
    Simulation::with_world(cfg, World::from_fixture(fixture_arena(), fx)).expect("valid scenario")
}

/// The mobile scenario of the comparative runs: 50 nodes in 750 x 750 m with
/// 250 m range, one CBR source split over three paths, 60 s, 50 J budgets.
pub fn mobile_config(protocol: Protocol, seed: u64) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.run.protocol = protocol;
    cfg.run.seed = seed;
    cfg.run.horizon_s = 60.0;
    cfg.energy.initial_j = 50.0;
    cfg.traffic.random_flows = 1;
    cfg.routing.k_paths = 3;
    cfg
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_graphs_are_connected_and_seeded() {
        for seed in 0..20 {
            let g = random_graph(seed, 9, 0.2);
            assert!(g.is_connected());
            assert_ne!(g.src, g.dst);
            assert_eq!(g, random_graph(seed, 9, 0.2));
        }
    }

    #[test]
    fn geometric_graphs_respect_range() {
        let g = geometric_graph(3, 30, 750.0, 250.0);
        assert!(g.is_connected());
        assert!(!g.adjacent(g.src, g.dst));
    }

    #[test]
    fn multipath_graphs_have_three_paths() {
        for seed in 0..10 {
            assert!(multipath_graph(seed).simple_paths().len() >= 3);
        }
    }
}
