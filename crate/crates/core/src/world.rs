//! Node placement, Random Waypoint mobility and unit-disk connectivity.

use std::collections::BTreeMap;
use std::fmt;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::engine::{RngStreams, SimTime, StreamPurpose};
use crate::fixture::Fixture;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2)).sqrt()
    }

    fn lerp(&self, other: &Position, frac: f64) -> Position {
        Position {
            x: self.x + (other.x - self.x) * frac,
            y: self.y + (other.y - self.y) * frac,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Arena {
    pub width: f64,
    pub height: f64,
    pub radio_range: f64,
}

impl Default for Arena {
    fn default() -> Self {
        Self {
            width: 750.0,
            height: 750.0,
            radio_range: 250.0,
        }
    }
}

impl Arena {
    pub fn contains(&self, p: &Position) -> bool {
        (0.0..=self.width).contains(&p.x) && (0.0..=self.height).contains(&p.y)
    }

    fn random_point(&self, rng: &mut ChaCha8Rng) -> Position {
        Position::new(
            rng.gen_range(0.0..=self.width),
            rng.gen_range(0.0..=self.height),
        )
    }
}

/// Random Waypoint parameters. Speeds in m/s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WaypointParams {
    pub v_min: f64,
    pub v_max: f64,
    pub pause: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Phase {
    Moving,
    PausedUntil(SimTime),
}

/// One Random Waypoint leg: straight line from `origin` to `target`, then a pause.
#[derive(Clone, Debug)]
pub struct WaypointState {
    pub origin: Position,
    pub target: Position,
    pub speed: f64,
    pub depart: SimTime,
    pub arrive: SimTime,
    pub pause_until: SimTime,
}

impl WaypointState {
    /// A leg starting at `depart`; the node pauses for `pause` after arriving.
    pub fn leg(
        origin: Position,
        target: Position,
        speed: f64,
        depart: SimTime,
        pause: SimTime,
    ) -> Self {
        let arrive = if speed > 0.0 {
            depart + SimTime::from_secs_f64(origin.distance(&target) / speed)
        } else if origin == target {
            depart
        } else {
            SimTime::MAX
        };
        let pause_until = if arrive == SimTime::MAX {
            SimTime::MAX
        } else {
            SimTime(arrive.0.saturating_add(pause.0))
        };
        Self {
            origin,
            target,
            speed,
            depart,
            arrive,
            pause_until,
        }
    }

    pub fn phase_at(&self, t: SimTime) -> Phase {
        if t < self.arrive {
            Phase::Moving
        } else {
            Phase::PausedUntil(self.pause_until)
        }
    }

    fn position_within(&self, t: SimTime) -> Position {
        if t >= self.arrive {
            return self.target;
        }
        if t <= self.depart {
            return self.origin;
        }
        let span = (self.arrive.0 - self.depart.0) as f64;
        let frac = (t.0 - self.depart.0) as f64 / span;
        self.origin.lerp(&self.target, frac)
    }
}

enum Motion {
    Static(Position),
    Waypoint {
        state: WaypointState,
        params: WaypointParams,
        rng: Box<ChaCha8Rng>,
    },
    /// Single explicit leg with no follow-up; used by tests and scripted fixtures.
    Scripted(WaypointState),
}

impl Motion {
    fn position_at(&mut self, arena: &Arena, t: SimTime) -> Position {
        match self {
            Motion::Static(p) => *p,
            Motion::Scripted(leg) => leg.position_within(t),
            Motion::Waypoint { state, params, rng } => {
                debug_assert!(t >= state.depart, "position query before current leg");
                while t >= state.pause_until {
                    let origin = state.target;
                    let target = arena.random_point(rng);
                    let speed = rng.gen_range(params.v_min..=params.v_max);
                    *state =
                        WaypointState::leg(origin, target, speed, state.pause_until, params.pause);
                }
                state.position_within(t)
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LinkChange {
    pub a: NodeId,
    pub b: NodeId,
    pub up: bool,
    pub at: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Subscription(usize);

impl Subscription {
    pub(crate) fn from_raw(id: usize) -> Self {
        Subscription(id)
    }

    pub(crate) fn raw(self) -> usize {
        self.0
    }
}

type LinkHook = Box<dyn FnMut(&LinkChange)>;

enum Connectivity {
    /// Unit disk over current positions.
    Range,
    /// Explicit undirected edges; positions are informational only.
    Edges(Vec<Vec<bool>>),
}

/// Positions and connectivity of every node in one run.
pub struct World {
    arena: Arena,
    motions: Vec<Motion>,
    names: Vec<String>,
    connectivity: Connectivity,
    latencies: BTreeMap<(NodeId, NodeId), SimTime>,
    cache_time: Option<SimTime>,
    cache: Vec<Position>,
    hooks: Vec<(usize, LinkHook)>,
    next_hook: usize,
    last_links: Option<Vec<bool>>,
}

impl World {
    fn build(
        arena: Arena,
        motions: Vec<Motion>,
        names: Vec<String>,
        connectivity: Connectivity,
    ) -> Self {
        let n = motions.len();
        Self {
            arena,
            motions,
            names,
            connectivity,
            latencies: BTreeMap::new(),
            cache_time: None,
            cache: vec![Position::new(0.0, 0.0); n],
            hooks: Vec::new(),
            next_hook: 0,
            last_links: None,
        }
    }

    fn default_names(n: usize) -> Vec<String> {
        (0..n).map(|i| i.to_string()).collect()
    }

    /// `n` nodes placed uniformly at random, moving by Random Waypoint. A
    /// `v_max` of zero yields a static scenario.
    pub fn random_waypoint(
        arena: Arena,
        n: usize,
        params: WaypointParams,
        streams: &RngStreams,
    ) -> Self {
        let motions = (0..n)
            .map(|i| {
                let mut rng = streams.stream(StreamPurpose::Mobility, i as u64);
                let start = arena.random_point(&mut rng);
                if params.v_max <= 0.0 {
                    return Motion::Static(start);
                }
                let target = arena.random_point(&mut rng);
                let speed = rng.gen_range(params.v_min..=params.v_max);
                Motion::Waypoint {
                    state: WaypointState::leg(start, target, speed, SimTime::ZERO, params.pause),
                    params,
                    rng: Box::new(rng),
                }
            })
            .collect();
        Self::build(arena, motions, Self::default_names(n), Connectivity::Range)
    }

    /// Static nodes at the given positions, connected by the unit-disk rule.
    pub fn static_positions(arena: Arena, positions: Vec<Position>) -> Self {
        let n = positions.len();
        let motions = positions.into_iter().map(Motion::Static).collect();
        Self::build(arena, motions, Self::default_names(n), Connectivity::Range)
    }

    /// Nodes following one explicit leg each (range-based connectivity).
    pub fn scripted(arena: Arena, legs: Vec<WaypointState>) -> Self {
        let n = legs.len();
        let motions = legs.into_iter().map(Motion::Scripted).collect();
        Self::build(arena, motions, Self::default_names(n), Connectivity::Range)
    }

    /// Static topology from a fixture. Edges, when present, override geometry.
    pub fn from_fixture(arena: Arena, fixture: &Fixture) -> Self {
        let n = fixture.node_count();
        let motions = (0..n)
            .map(|i| Motion::Static(fixture.positions[i].unwrap_or(Position::new(0.0, 0.0))))
            .collect();
        let connectivity = if fixture.edges.is_empty() {
            Connectivity::Range
        } else {
            let mut adj = vec![vec![false; n]; n];
            for &(a, b) in &fixture.edges {
                adj[a.index()][b.index()] = true;
                adj[b.index()][a.index()] = true;
            }
            Connectivity::Edges(adj)
        };
        let mut w = Self::build(arena, motions, fixture.names.clone(), connectivity);
        for (&(a, b), &lat) in &fixture.latencies {
            w.latencies.insert(ordered(a, b), lat);
        }
        w
    }

    pub fn arena(&self) -> &Arena {
        &self.arena
    }

    pub fn node_count(&self) -> usize {
        self.motions.len()
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> {
        (0..self.motions.len() as u32).map(NodeId)
    }

    pub fn name(&self, node: NodeId) -> &str {
        &self.names[node.index()]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn lookup(&self, name: &str) -> Option<NodeId> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| NodeId(i as u32))
    }

    /// Per-link latency override (used by the ideal channel).
    pub fn link_latency(&self, a: NodeId, b: NodeId) -> Option<SimTime> {
        self.latencies.get(&ordered(a, b)).copied()
    }

    pub fn set_link_latency(&mut self, a: NodeId, b: NodeId, latency: SimTime) {
        self.latencies.insert(ordered(a, b), latency);
    }

    fn refresh(&mut self, t: SimTime) {
        if self.cache_time == Some(t) {
            return;
        }
        let arena = self.arena;
        for (slot, m) in self.cache.iter_mut().zip(self.motions.iter_mut()) {
            *slot = m.position_at(&arena, t);
        }
        self.cache_time = Some(t);
    }

    /// Position of `node` at `t`. Queries must not go back before the node's
    /// current mobility leg.
    pub fn position_at(&mut self, node: NodeId, t: SimTime) -> Position {
        self.refresh(t);
        self.cache[node.index()]
    }

    pub fn in_range(&mut self, a: NodeId, b: NodeId, t: SimTime) -> bool {
        if a == b {
            return false;
        }
        match &self.connectivity {
            Connectivity::Edges(adj) => adj[a.index()][b.index()],
            Connectivity::Range => {
                self.refresh(t);
                self.cache[a.index()].distance(&self.cache[b.index()]) <= self.arena.radio_range
            }
        }
    }

    /// Nodes within radio range of `node` at `t`, in ascending id order.
    pub fn neighbors_of(&mut self, node: NodeId, t: SimTime) -> Vec<NodeId> {
        match &self.connectivity {
            Connectivity::Edges(adj) => adj[node.index()]
                .iter()
                .enumerate()
                .filter(|(_, &e)| e)
                .map(|(i, _)| NodeId(i as u32))
                .collect(),
            Connectivity::Range => {
                self.refresh(t);
                let me = self.cache[node.index()];
                let range = self.arena.radio_range;
                self.cache
                    .iter()
                    .enumerate()
                    .filter(|&(i, p)| i != node.index() && me.distance(p) <= range)
                    .map(|(i, _)| NodeId(i as u32))
                    .collect()
            }
        }
    }

    pub fn on_topology_change<F>(&mut self, hook: F) -> Subscription
    where
        F: FnMut(&LinkChange) + 'static,
    {
        let id = self.next_hook;
        self.next_hook += 1;
        self.hooks.push((id, Box::new(hook)));
        Subscription(id)
    }

    pub fn unsubscribe(&mut self, sub: Subscription) {
        self.hooks.retain(|(id, _)| *id != sub.0);
    }

    /// Compares connectivity at `t` with the previous sample, invokes the
    /// topology hooks for every link that crossed the range threshold and
    /// returns the changes. The first call only establishes the baseline.
    pub fn sample_links(&mut self, t: SimTime) -> Vec<LinkChange> {
        let n = self.node_count();
        let mut links = Vec::with_capacity(n * n.saturating_sub(1) / 2);
        for a in 0..n {
            for b in a + 1..n {
                links.push(self.in_range(NodeId(a as u32), NodeId(b as u32), t));
            }
        }
        let mut changes = Vec::new();
        if let Some(prev) = &self.last_links {
            let mut k = 0;
            for a in 0..n {
                for b in a + 1..n {
                    if prev[k] != links[k] {
                        changes.push(LinkChange {
                            a: NodeId(a as u32),
                            b: NodeId(b as u32),
                            up: links[k],
                            at: t,
                        });
                    }
                    k += 1;
                }
            }
        }
        self.last_links = Some(links);
        for change in &changes {
            for (_, hook) in self.hooks.iter_mut() {
                hook(change);
            }
        }
        changes
    }
}

fn ordered(a: NodeId, b: NodeId) -> (NodeId, NodeId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::cell::RefCell;
    use std::rc::Rc;

    fn pair(distance: f64) -> World {
        World::static_positions(
            Arena::default(),
            vec![
                Position::new(100.0, 100.0),
                Position::new(100.0 + distance, 100.0),
            ],
        )
    }

    #[test]
    fn static_scenario_never_moves() {
        let params = WaypointParams {
            v_min: 0.0,
            v_max: 0.0,
            pause: SimTime::from_secs(1),
        };
        let mut w = World::random_waypoint(Arena::default(), 5, params, &RngStreams::new(3));
        let p0 = w.position_at(NodeId(2), SimTime::ZERO);
        let p1 = w.position_at(NodeId(2), SimTime::from_secs(250));
        assert_eq!(p0, p1);
    }

    #[test]
    fn linear_motion() {
        let leg = WaypointState::leg(
            Position::new(0.0, 0.0),
            Position::new(100.0, 0.0),
            10.0,
            SimTime::ZERO,
            SimTime::from_secs(1),
        );
        let mut w = World::scripted(Arena::default(), vec![leg]);
        let p = w.position_at(NodeId(0), SimTime::from_secs(5));
        assert!((p.x - 50.0).abs() < 1e-9 && p.y.abs() < 1e-9);
    }

    #[test]
    fn pauses_at_target() {
        let mut rng_world = World::random_waypoint(
            Arena::default(),
            1,
            WaypointParams {
                v_min: 5.0,
                v_max: 5.0,
                pause: SimTime::from_secs(1),
            },
            &RngStreams::new(9),
        );
        let (target, arrive) = match &rng_world.motions[0] {
            Motion::Waypoint { state, .. } => (state.target, state.arrive),
            _ => unreachable!(),
        };
        let p = rng_world.position_at(NodeId(0), arrive + SimTime::from_millis(500));
        assert_eq!(p, target);
    }

    #[test]
    fn range_boundary() {
        let mut near = pair(249.0);
        assert_eq!(near.neighbors_of(NodeId(0), SimTime::ZERO), vec![NodeId(1)]);
        assert_eq!(near.neighbors_of(NodeId(1), SimTime::ZERO), vec![NodeId(0)]);
        let mut far = pair(251.0);
        assert!(far.neighbors_of(NodeId(0), SimTime::ZERO).is_empty());
    }

    #[test]
    fn positions_stay_inside_arena() {
        let params = WaypointParams {
            v_min: 1.0,
            v_max: 20.0,
            pause: SimTime::from_millis(15),
        };
        let mut w = World::random_waypoint(Arena::default(), 10, params, &RngStreams::new(1));
        let arena = *w.arena();
        for step in 0..3000 {
            let t = SimTime::from_millis(step * 100);
            for n in 0..10 {
                assert!(arena.contains(&w.position_at(NodeId(n), t)));
            }
        }
    }

    fn moving_apart_then_back() -> World {
        // Node 1 leaves from 200 m to 300 m and node 2 approaches from 300 m to
        // 200 m, both over 10 s, so link 0-1 goes down at 5 s and link 0-2 comes up.
        let still = WaypointState::leg(
            Position::new(0.0, 0.0),
            Position::new(0.0, 0.0),
            0.0,
            SimTime::ZERO,
            SimTime::ZERO,
        );
        let away = WaypointState::leg(
            Position::new(200.0, 0.0),
            Position::new(300.0, 0.0),
            10.0,
            SimTime::ZERO,
            SimTime::ZERO,
        );
        let back = WaypointState::leg(
            Position::new(0.0, 300.0),
            Position::new(0.0, 200.0),
            10.0,
            SimTime::ZERO,
            SimTime::ZERO,
        );
        World::scripted(
            Arena {
                width: 1000.0,
                height: 1000.0,
                radio_range: 250.0,
            },
            vec![still, away, back],
        )
    }

    #[test]
    fn topology_hook_sees_one_down_and_one_up() {
        let mut w = moving_apart_then_back();
        let log = Rc::new(RefCell::new(Vec::new()));
        let sink = log.clone();
        w.on_topology_change(move |c| sink.borrow_mut().push(*c));
        for step in 0..=150 {
            w.sample_links(SimTime::from_millis(step * 100));
        }
        let log = log.borrow();
        let downs: Vec<_> = log.iter().filter(|c| !c.up).collect();
        let ups: Vec<_> = log.iter().filter(|c| c.up).collect();
        assert_eq!(downs.len(), 1);
        assert_eq!((downs[0].a, downs[0].b), (NodeId(0), NodeId(1)));
        assert_eq!(downs[0].at, SimTime::from_millis(5100));
        assert_eq!(ups.len(), 1);
        assert_eq!((ups[0].a, ups[0].b), (NodeId(0), NodeId(2)));
    }

    #[test]
    fn crossing_back_yields_up_after_down() {
        let there = WaypointState::leg(
            Position::new(200.0, 0.0),
            Position::new(300.0, 0.0),
            10.0,
            SimTime::ZERO,
            SimTime::ZERO,
        );
        let origin = WaypointState::leg(
            Position::new(0.0, 0.0),
            Position::new(0.0, 0.0),
            0.0,
            SimTime::ZERO,
            SimTime::ZERO,
        );
        let mut w = World::scripted(
            Arena {
                width: 1000.0,
                height: 1000.0,
                radio_range: 250.0,
            },
            vec![origin, there],
        );
        let mut changes = Vec::new();
        for step in 0..=120 {
            changes.extend(w.sample_links(SimTime::from_millis(step * 100)));
        }
        // Swap in the return leg and keep sampling.
        w.motions[1] = Motion::Scripted(WaypointState::leg(
            Position::new(300.0, 0.0),
            Position::new(200.0, 0.0),
            10.0,
            SimTime::from_secs(12),
            SimTime::ZERO,
        ));
        w.cache_time = None;
        for step in 121..=240 {
            changes.extend(w.sample_links(SimTime::from_millis(step * 100)));
        }
        let ups: Vec<bool> = changes.iter().map(|c| c.up).collect();
        assert_eq!(ups, vec![false, true]);
    }

    #[test]
    fn static_world_never_fires_hook() {
        let mut w = pair(100.0);
        let fired = Rc::new(RefCell::new(0));
        let f = fired.clone();
        w.on_topology_change(move |_| *f.borrow_mut() += 1);
        for step in 0..50 {
            w.sample_links(SimTime::from_millis(step * 100));
        }
        assert_eq!(*fired.borrow(), 0);
    }
}
