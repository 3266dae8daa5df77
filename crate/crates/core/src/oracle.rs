//! Brute-force reference computations over frozen topologies.
//!
//! [`oracle_anc`] derives the final active-neighbour count of every route
//! reply straight from the definitions: who holds the flood at the instant a
//! query reaches them, who had already rebroadcast, and who queried a node
//! before a reply passed through it. It shares no code with the router. Its
//! only notion of a network is a latency per edge; messages are instantaneous
//! facts scheduled at sums of latencies.

#![allow(clippy::needless_range_loop)]

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashSet};

use thiserror::Error;

use crate::engine::SimTime;
use crate::fixture::Fixture;
use crate::world::NodeId;

/// Static undirected graph with per-edge latencies and a designated pair.
#[derive(Clone, Debug, PartialEq)]
pub struct FrozenGraph {
    pub names: Vec<String>,
    pub adj: Vec<Vec<bool>>,
    pub latency: BTreeMap<(NodeId, NodeId), SimTime>,
    pub src: NodeId,
    pub dst: NodeId,
}

fn ordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl FrozenGraph {
    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    pub fn adjacent(&self, a: NodeId, b: NodeId) -> bool {
        self.adj[a.index()][b.index()]
    }

    pub fn neighbors(&self, a: NodeId) -> impl Iterator<Item = NodeId> + '_ {
        self.adj[a.index()]
            .iter()
            .enumerate()
            .filter(|(_, &e)| e)
            .map(|(i, _)| NodeId(i as u32))
    }

    /// Latency of an edge; edges without an explicit value use `default`.
    pub fn lat(&self, a: NodeId, b: NodeId, default: SimTime) -> SimTime {
        self.latency.get(&ordered(a, b)).copied().unwrap_or(default)
    }

    pub fn from_fixture(fx: &Fixture, src: &str, dst: &str) -> Option<Self> {
        let n = fx.node_count();
        let mut adj = vec![vec![false; n]; n];
        for &(a, b) in &fx.edges {
            adj[a.index()][b.index()] = true;
            adj[b.index()][a.index()] = true;
        }
        Some(Self {
            names: fx.names.clone(),
            adj,
            latency: fx.latencies.iter().map(|(&k, &v)| (k, v)).collect(),
            src: fx.id(src)?,
            dst: fx.id(dst)?,
        })
    }

    pub fn to_fixture(&self) -> Fixture {
        let mut fx = Fixture::default();
        for name in &self.names {
            fx.add_node(name);
        }
        let n = self.node_count();
        for a in 0..n {
            for b in a + 1..n {
                if self.adj[a][b] {
                    fx.add_edge(&self.names[a], &self.names[b]);
                }
            }
        }
        for (&(a, b), &l) in &self.latency {
            fx.set_latency(a, b, l);
        }
        fx
    }

    pub fn is_connected(&self) -> bool {
        let n = self.node_count();
        if n == 0 {
            return true;
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        while let Some(u) = stack.pop() {
            for v in 0..n {
                if self.adj[u][v] && !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Every simple `src -> dst` path, by exhaustive search.
    pub fn simple_paths(&self) -> Vec<Vec<NodeId>> {
        fn go(g: &FrozenGraph, cur: NodeId, path: &mut Vec<NodeId>, out: &mut Vec<Vec<NodeId>>) {
            if cur == g.dst {
                out.push(path.clone());
                return;
            }
            let next: Vec<NodeId> = g.neighbors(cur).collect();
            for nb in next {
                if !path.contains(&nb) {
                    path.push(nb);
                    go(g, nb, path, out);
                    path.pop();
                }
            }
        }
        let mut out = Vec::new();
        go(self, self.src, &mut vec![self.src], &mut out);
        out
    }
}

/// The seven-node topology of the worked example with latencies that make
/// every propagation step unambiguous: S reaches A, B and C first, B's copy
/// reaches D before E and F rebroadcast, and E (F) hears A (C) before B.
pub fn worked_example_fixture() -> Fixture {
    Fixture::parse(WORKED_EXAMPLE_TEXT).expect("built-in fixture parses")
}

pub const WORKED_EXAMPLE_TEXT: &str = "\
# S floods towards D; B is adjacent to every other node.
S A
S B
S C
A B
B C
A E
C F
B E
B F
B D
E D
F D
latency S A 1000
latency S B 1100
latency S C 1200
latency A B 1600
latency B C 1800
latency A E 1300
latency B E 1500
latency C F 1400
latency B F 1700
latency B D 5000
latency E D 1900
latency F D 2100
";

#[derive(Clone, Copy, Debug)]
pub struct OracleParams {
    pub query_timer: SimTime,
    pub default_latency: SimTime,
    pub rebroadcast_cap: u32,
    pub ttl_max: u32,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            query_timer: SimTime::from_millis(15),
            default_latency: SimTime(1000),
            rebroadcast_cap: 3,
            ttl_max: 16,
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    /// Two order-sensitive facts coincide at one node, so the outcome depends
    /// on tie-breaking rather than on the rules.
    #[error("simultaneous events at node {node} at t={at}")]
    Ambiguous { node: NodeId, at: SimTime },
}

/// One route reply as it reaches the source.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OracleReply {
    pub route: Vec<NodeId>,
    pub anc: u32,
    pub arrival: SimTime,
}

#[derive(Clone, Debug)]
enum Fact {
    Copy {
        from: NodeId,
        traversed: Vec<NodeId>,
        anc: u32,
    },
    Query {
        querier: NodeId,
        phase: usize,
        predecessor: NodeId,
    },
    Reply {
        phase: usize,
        responder: NodeId,
    },
    Close {
        phase: usize,
    },
    Reply2Src {
        route: Vec<NodeId>,
        cursor: usize,
        anc: u32,
    },
}

impl Fact {
    /// Facts of these kinds commute with each other at one node.
    fn commutes(&self) -> bool {
        matches!(self, Fact::Query { .. } | Fact::Reply { .. })
    }
}

/// A fact with no effect at `node`, whatever order it is handled in.
fn is_inert(f: &Fact, node: NodeId, g: &FrozenGraph, holders: &[Holder]) -> bool {
    match f {
        // Acceptance only narrows as copies are stored, so a copy refused now
        // is refused in every order.
        Fact::Copy {
            from, traversed, ..
        } => {
            node == g.src
                || traversed.contains(&node)
                || !holders[node.index()].accepts(
                    *from,
                    traversed.first().copied().unwrap_or(node),
                    traversed.len(),
                )
        }
        Fact::Query { .. } => node == g.src,
        _ => false,
    }
}

struct Phase {
    node: NodeId,
    predecessor: NodeId,
    traversed: Vec<NodeId>,
    anc: u32,
    positives: u32,
    open: bool,
}

#[derive(Default)]
struct Holder {
    /// (prev hop, founder, hops) of accepted copies.
    accepted: Vec<(NodeId, NodeId, usize)>,
    phases: u32,
    rebroadcast: bool,
    answered: HashSet<NodeId>,
    /// One entry per counted query.
    after: u32,
}

impl Holder {
    fn accepts(&self, from: NodeId, founder: NodeId, hops: usize) -> bool {
        self.accepted.is_empty()
            || (self.accepted.iter().all(|a| a.0 != from)
                && self
                    .accepted
                    .iter()
                    .filter(|a| a.1 == founder)
                    .all(|a| hops < a.2))
    }
}

/// Final count carried by every route reply the source receives, in arrival
/// order. An empty result means the flood never reached the destination.
pub fn oracle_replies(g: &FrozenGraph, p: &OracleParams) -> Result<Vec<OracleReply>, OracleError> {
    let n = g.node_count();
    let lat = |a: NodeId, b: NodeId| g.lat(a, b, p.default_latency);
    let mut holders: Vec<Holder> = (0..n).map(|_| Holder::default()).collect();
    let mut phases: Vec<Phase> = Vec::new();
    let mut queue: BinaryHeap<Reverse<(SimTime, u64, NodeId)>> = BinaryHeap::new();
    let mut facts: BTreeMap<u64, Fact> = BTreeMap::new();
    let mut seq = 0u64;
    let mut post = |queue: &mut BinaryHeap<Reverse<(SimTime, u64, NodeId)>>,
                    facts: &mut BTreeMap<u64, Fact>,
                    at: SimTime,
                    node: NodeId,
                    fact: Fact| {
        queue.push(Reverse((at, seq, node)));
        facts.insert(seq, fact);
        seq += 1;
    };
    let mut replies = Vec::new();

    for nb in g.neighbors(g.src) {
        post(
            &mut queue,
            &mut facts,
            lat(g.src, nb),
            nb,
            Fact::Copy {
                from: g.src,
                traversed: Vec::new(),
                anc: 0,
            },
        );
    }

    while let Some(Reverse((now, id, node))) = queue.pop() {
        let fact = facts.remove(&id).expect("fact stored");
        // Any other fact at the same node and instant?
        let inert = |f: &Fact| is_inert(f, node, g, &holders);
        let clash = !inert(&fact)
            && queue.iter().any(|Reverse((t, other, nd))| {
                let o = &facts[other];
                *t == now && *nd == node && !inert(o) && !(fact.commutes() && o.commutes())
            });
        if clash {
            return Err(OracleError::Ambiguous { node, at: now });
        }
        match fact {
            Fact::Copy {
                from,
                traversed,
                anc,
            } => {
                if node == g.src || traversed.contains(&node) {
                    continue;
                }
                let founder = traversed.first().copied().unwrap_or(node);
                let hops = traversed.len();
                let h = &mut holders[node.index()];
                if !h.accepts(from, founder, hops) {
                    continue;
                }
                h.accepted.push((from, founder, hops));
                if node == g.dst {
                    let mut route = vec![g.src];
                    route.extend_from_slice(&traversed);
                    route.push(node);
                    let cursor = route.len() - 2;
                    post(
                        &mut queue,
                        &mut facts,
                        now + lat(node, from),
                        route[cursor],
                        Fact::Reply2Src { route, cursor, anc },
                    );
                    continue;
                }
                if hops + 1 > p.ttl_max as usize || h.phases >= p.rebroadcast_cap {
                    continue;
                }
                h.phases += 1;
                let phase = phases.len();
                phases.push(Phase {
                    node,
                    predecessor: from,
                    traversed,
                    anc,
                    positives: 0,
                    open: true,
                });
                for nb in g.neighbors(node) {
                    post(
                        &mut queue,
                        &mut facts,
                        now + lat(node, nb),
                        nb,
                        Fact::Query {
                            querier: node,
                            phase,
                            predecessor: from,
                        },
                    );
                }
                post(
                    &mut queue,
                    &mut facts,
                    now + p.query_timer,
                    node,
                    Fact::Close { phase },
                );
            }
            Fact::Query {
                querier,
                phase,
                predecessor,
            } => {
                let h = &mut holders[node.index()];
                // Holding the flood means having accepted a copy earlier.
                if h.accepted.is_empty() || h.answered.contains(&querier) {
                    continue;
                }
                h.answered.insert(querier);
                if h.rebroadcast && predecessor != node {
                    h.after += 1;
                }
                post(
                    &mut queue,
                    &mut facts,
                    now + lat(node, querier),
                    querier,
                    Fact::Reply {
                        phase,
                        responder: node,
                    },
                );
            }
            Fact::Reply { phase, responder } => {
                let ph = &mut phases[phase];
                if ph.open && responder != ph.predecessor {
                    ph.positives += 1;
                }
            }
            Fact::Close { phase } => {
                let ph = &mut phases[phase];
                ph.open = false;
                holders[node.index()].rebroadcast = true;
                let mut traversed = ph.traversed.clone();
                traversed.push(ph.node);
                let anc = ph.anc + ph.positives;
                for nb in g.neighbors(node) {
                    post(
                        &mut queue,
                        &mut facts,
                        now + lat(node, nb),
                        nb,
                        Fact::Copy {
                            from: node,
                            traversed: traversed.clone(),
                            anc,
                        },
                    );
                }
            }
            Fact::Reply2Src { route, cursor, anc } => {
                if cursor == 0 {
                    replies.push(OracleReply {
                        route,
                        anc,
                        arrival: now,
                    });
                    continue;
                }
                let anc = anc + holders[node.index()].after;
                let prev = route[cursor - 1];
                post(
                    &mut queue,
                    &mut facts,
                    now + lat(node, prev),
                    prev,
                    Fact::Reply2Src {
                        route,
                        cursor: cursor - 1,
                        anc,
                    },
                );
            }
        }
    }
    Ok(replies)
}

/// Expected final count per discovered path.
pub fn oracle_anc(
    g: &FrozenGraph,
    p: &OracleParams,
) -> Result<BTreeMap<Vec<NodeId>, u32>, OracleError> {
    Ok(oracle_replies(g, p)?
        .into_iter()
        .map(|r| (r.route, r.anc))
        .collect())
}

fn interior(path: &[NodeId]) -> &[NodeId] {
    if path.len() <= 2 {
        &[]
    } else {
        &path[1..path.len() - 1]
    }
}

/// True iff no interior node of one path is equal or adjacent to an interior
/// node of the other.
pub fn zone_disjoint(g: &FrozenGraph, p1: &[NodeId], p2: &[NodeId]) -> bool {
    interior(p1)
        .iter()
        .all(|&u| interior(p2).iter().all(|&v| u != v && !g.adjacent(u, v)))
}

/// Number of interior node pairs, taken from different paths, that are equal
/// or adjacent.
pub fn interference_degree(g: &FrozenGraph, paths: &[Vec<NodeId>]) -> usize {
    let mut count = 0;
    for i in 0..paths.len() {
        for j in i + 1..paths.len() {
            for &u in interior(&paths[i]) {
                for &v in interior(&paths[j]) {
                    if u == v || g.adjacent(u, v) {
                        count += 1;
                    }
                }
            }
        }
    }
    count
}

#[cfg(test)]
mod tests {
    use super::*;

    fn worked_example() -> FrozenGraph {
        FrozenGraph::from_fixture(&worked_example_fixture(), "S", "D").unwrap()
    }

    fn path(g: &FrozenGraph, s: &str) -> Vec<NodeId> {
        s.split('-')
            .map(|n| {
                g.names
                    .iter()
                    .position(|x| x == n)
                    .map(|i| NodeId(i as u32))
                    .unwrap()
            })
            .collect()
    }

    #[test]
    fn worked_example_counts() {
        let g = worked_example();
        let anc = oracle_anc(&g, &OracleParams::default()).unwrap();
        let want: BTreeMap<Vec<NodeId>, u32> = [("S-B-D", 4), ("S-A-E-D", 2), ("S-C-F-D", 2)]
            .iter()
            .map(|(p, a)| (path(&g, p), *a))
            .collect();
        assert_eq!(anc, want);
    }

    #[test]
    fn bare_path_counts_zero() {
        let fx = Fixture::parse("S X\nX D\n").unwrap();
        let g = FrozenGraph::from_fixture(&fx, "S", "D").unwrap();
        let anc = oracle_anc(&g, &OracleParams::default()).unwrap();
        assert_eq!(
            anc.into_iter().collect::<Vec<_>>(),
            vec![(path(&g, "S-X-D"), 0)]
        );
    }

    #[test]
    fn triangle_with_shared_destination() {
        // S-X, S-Y, X-Y, X-D, Y-D. X hears first.
        let fx = Fixture::parse(
            "S X\nS Y\nX Y\nX D\nY D\nlatency S X 1000\nlatency S Y 1200\nlatency X Y 1500\nlatency X D 1100\nlatency Y D 1400\n",
        )
        .unwrap();
        let g = FrozenGraph::from_fixture(&fx, "S", "D").unwrap();
        let anc = oracle_anc(&g, &OracleParams::default()).unwrap();
        // X and Y count each other once. Their second phases only reach D,
        // which never rebroadcasts, so no later query is counted.
        assert_eq!(anc.get(&path(&g, "S-X-D")), Some(&1));
        assert_eq!(anc.get(&path(&g, "S-Y-D")), Some(&1));
        assert_eq!(anc.len(), 2);
    }

    #[test]
    fn disconnected_destination_yields_nothing() {
        let fx = Fixture::parse("S X\nD\n").unwrap();
        let g = FrozenGraph::from_fixture(&fx, "S", "D").unwrap();
        assert!(oracle_anc(&g, &OracleParams::default()).unwrap().is_empty());
    }

    #[test]
    fn ties_are_reported() {
        let fx = Fixture::parse("S X\nS Y\nX D\nY D\n").unwrap();
        let g = FrozenGraph::from_fixture(&fx, "S", "D").unwrap();
        assert!(matches!(
            oracle_anc(&g, &OracleParams::default()),
            Err(OracleError::Ambiguous { .. })
        ));
    }

    #[test]
    fn zone_disjointness_on_worked_example() {
        let g = worked_example();
        let (saed, scfd, sbd) = (path(&g, "S-A-E-D"), path(&g, "S-C-F-D"), path(&g, "S-B-D"));
        assert!(zone_disjoint(&g, &saed, &scfd));
        assert!(!zone_disjoint(&g, &saed, &sbd));
        assert!(!zone_disjoint(&g, &saed, &saed));
        assert_eq!(interference_degree(&g, &[saed.clone(), scfd.clone()]), 0);
        assert_eq!(interference_degree(&g, &[saed.clone(), sbd.clone()]), 2);
        assert_eq!(interference_degree(&g, &[saed, scfd, sbd]), 4);
    }

    #[test]
    fn simple_paths_enumerates_all() {
        let fx = Fixture::parse("S X\nS Y\nX Y\nX D\nY D\n").unwrap();
        let g = FrozenGraph::from_fixture(&fx, "S", "D").unwrap();
        assert_eq!(g.simple_paths().len(), 4);
    }
}
