//! One simulation run: world, MAC, router, energy and traffic driven by a
//! single event queue.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};
use crate::energy::{ChargeOutcome, Energy, EnergyRole};
use crate::engine::{RngStreams, Scheduler, SimTime, StreamPurpose};
use crate::fixture::{Fixture, FixtureError};
use crate::mac::{Mac, MacCtx, MacEvent, MacUpcall, SendOutcome};
use crate::metrics::{self, MetricsReport};
use crate::packet::{DataPacket, Packet, PacketKind, PathKey};
use crate::routing::{Router, RouterAction, RouterTimer};
use crate::trace::{TraceEvent, TraceRecord};
use crate::traffic::CbrFlow;
use crate::world::{Arena, NodeId, WaypointParams, World};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Fixture(#[from] FixtureError),
    #[error("invalid config field `traffic.flows`: unknown node `{0}`")]
    UnknownNode(String),
    #[error("invalid config field `traffic.flows`: flow from `{0}` to itself")]
    SelfFlow(String),
}

pub enum SimEvent {
    Mac(MacEvent),
    Router(RouterTimer),
    Traffic { flow: usize, seq: u64 },
    LinkTick,
    MetricsTick,
}

impl From<MacEvent> for SimEvent {
    fn from(e: MacEvent) -> Self {
        SimEvent::Mac(e)
    }
}

pub struct Simulation {
    cfg: RunConfig,
    sched: Scheduler<SimEvent>,
    world: World,
    mac: Mac,
    router: Router,
    energy: Energy,
    flows: Vec<CbrFlow>,
    trace: Option<Vec<TraceRecord>>,
    deliveries: Option<Vec<DataPacket>>,
    delays: Vec<f64>,
    control_tx: BTreeMap<PacketKind, u64>,
    last_idle_charge: SimTime,
    dead: Vec<bool>,
}

/// Builds the world a configuration describes.
pub fn build_world(cfg: &RunConfig, streams: &RngStreams) -> Result<World, SimError> {
    let arena = Arena {
        width: cfg.arena.width_m,
        height: cfg.arena.height_m,
        radio_range: cfg.arena.radio_range_m,
    };
    if let Some(path) = &cfg.arena.fixture {
        let fx = Fixture::load(Path::new(path))?;
        return Ok(World::from_fixture(arena, &fx));
    }
    let params = WaypointParams {
        v_min: cfg.mobility.v_min_mps,
        v_max: cfg.mobility.v_max_mps,
        pause: cfg.pause(),
    };
    Ok(World::random_waypoint(
        arena,
        cfg.arena.nodes,
        params,
        streams,
    ))
}

impl Simulation {
    pub fn new(cfg: &RunConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let streams = RngStreams::new(cfg.run.seed);
        let world = build_world(cfg, &streams)?;
        Self::with_world(cfg, world)
    }

    /// Runs `cfg` on an explicitly constructed world (the config's arena
    /// section is ignored).
    pub fn with_world(cfg: &RunConfig, world: World) -> Result<Self, SimError> {
        cfg.validate()?;
        let streams = RngStreams::new(cfg.run.seed);
        let n = world.node_count();
        let flows = resolve_flows(cfg, &world, &streams)?;
        let mut sim = Self {
            mac: Mac::new(cfg.mac.clone(), n, &streams),
            router: Router::new(cfg.run.protocol, cfg.routing.clone(), n),
            energy: Energy::new(cfg.energy.clone(), n, !cfg.mac.ideal_channel),
            cfg: cfg.clone(),
            sched: Scheduler::new(),
            world,
            flows,
            trace: None,
            deliveries: None,
            delays: Vec::new(),
            control_tx: BTreeMap::new(),
            last_idle_charge: SimTime::ZERO,
            dead: vec![false; n],
        };
        for (i, f) in sim.flows.iter().enumerate() {
            if let Some(t) = f.emission(0) {
                sim.sched.schedule(t, SimEvent::Traffic { flow: i, seq: 0 });
            }
        }
        sim.sched.schedule(sim.cfg.link_tick(), SimEvent::LinkTick);
        sim.sched
            .schedule(sim.cfg.metrics_tick(), SimEvent::MetricsTick);
        Ok(sim)
    }

    pub fn enable_trace(&mut self) {
        self.trace = Some(Vec::new());
        self.router.set_trace(true);
    }

    /// Keeps every delivered data packet, hop list included.
    pub fn enable_delivery_log(&mut self) {
        self.deliveries = Some(Vec::new());
    }

    pub fn delivery_log(&self) -> &[DataPacket] {
        self.deliveries.as_deref().unwrap_or(&[])
    }

    pub fn config(&self) -> &RunConfig {
        &self.cfg
    }

    pub fn now(&self) -> SimTime {
        self.sched.now()
    }

    pub fn events_executed(&self) -> u64 {
        self.sched.executed()
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn world_mut(&mut self) -> &mut World {
        &mut self.world
    }

    pub fn mac(&self) -> &Mac {
        &self.mac
    }

    pub fn mac_mut(&mut self) -> &mut Mac {
        &mut self.mac
    }

    pub fn router(&self) -> &Router {
        &self.router
    }

    pub fn energy(&self) -> &Energy {
        &self.energy
    }

    pub fn energy_mut(&mut self) -> &mut Energy {
        &mut self.energy
    }

    pub fn flows(&self) -> &[CbrFlow] {
        &self.flows
    }

    pub fn control_tx(&self) -> &BTreeMap<PacketKind, u64> {
        &self.control_tx
    }

    pub fn trace_records(&self) -> &[TraceRecord] {
        self.trace.as_deref().unwrap_or(&[])
    }

    pub fn trace_lines(&self) -> Vec<String> {
        let names = self.world.names();
        self.trace_records()
            .iter()
            .map(|r| r.format(names))
            .collect()
    }

    /// Starts a route discovery without traffic (used by discovery-only
    /// scenarios).
    pub fn discover(&mut self, src: NodeId, dst: NodeId) {
        let now = self.sched.now();
        self.router.originate(now, src, dst, 0);
        self.pump();
    }

    pub fn run(&mut self) -> MetricsReport {
        let horizon = self.cfg.horizon();
        self.run_until(horizon);
        self.report()
    }

    pub fn run_until(&mut self, limit: SimTime) {
        while let Some(ev) = self.sched.pop_until(limit) {
            self.dispatch(ev.action);
        }
        self.sched.advance_to(limit);
        self.charge_idle();
    }

    fn alive(&self, node: NodeId) -> bool {
        self.energy.is_alive(node)
    }

    fn dispatch(&mut self, ev: SimEvent) {
        let now = self.sched.now();
        match ev {
            SimEvent::Mac(ev) => {
                let mut cx = MacCtx {
                    sched: &mut self.sched,
                    world: &mut self.world,
                    energy: &mut self.energy,
                };
                self.mac.handle(&mut cx, ev);
            }
            SimEvent::Router(timer) => {
                let owner = match &timer {
                    RouterTimer::Query { node, .. } => *node,
                    RouterTimer::RreqRetry { src, .. } | RouterTimer::Select { src, .. } => *src,
                };
                if self.alive(owner) {
                    self.router.on_timer(now, timer);
                }
            }
            SimEvent::Traffic { flow, seq } => {
                let f = self.flows[flow].clone();
                if self.alive(f.src) {
                    self.router.send_data(
                        now,
                        DataPacket {
                            flow: f.id,
                            seq,
                            src: f.src,
                            dst: f.dst,
                            path_key: PathKey {
                                seq: 0,
                                first_hop: f.src,
                                last_hop: f.src,
                            },
                            created: now,
                            payload_bytes: f.packet_bytes,
                            hops: Vec::new(),
                        },
                    );
                    if let Some(t) = f.emission(seq + 1) {
                        self.sched
                            .schedule(t, SimEvent::Traffic { flow, seq: seq + 1 });
                    }
                }
            }
            SimEvent::LinkTick => {
                self.world.sample_links(now);
                self.sched
                    .schedule_in(self.cfg.link_tick(), SimEvent::LinkTick);
            }
            SimEvent::MetricsTick => {
                self.charge_idle();
                self.router.housekeep(now);
                self.sched
                    .schedule_in(self.cfg.metrics_tick(), SimEvent::MetricsTick);
            }
        }
        self.pump();
    }

    /// Integrates idle drain since the previous charge.
    fn charge_idle(&mut self) {
        let now = self.sched.now();
        let dt = now.saturating_sub(self.last_idle_charge);
        self.last_idle_charge = now;
        if dt == SimTime::ZERO {
            return;
        }
        let nodes: Vec<NodeId> = self.world.nodes().collect();
        for n in nodes {
            if self.energy.charge(n, EnergyRole::Idle, dt, now) == ChargeOutcome::Died {
                self.mac.kill(&mut self.sched, n);
                self.node_died(n);
            }
        }
        self.pump();
    }

    fn node_died(&mut self, node: NodeId) {
        if std::mem::replace(&mut self.dead[node.index()], true) {
            return;
        }
        self.router.on_node_dead(node);
        let at = self.sched.now();
        if let Some(t) = &mut self.trace {
            t.push(TraceRecord {
                at,
                node,
                event: TraceEvent::NodeDead,
            });
        }
    }

    /// Moves upcalls and actions between the MAC and the router until both
    /// are quiet.
    fn pump(&mut self) {
        loop {
            let ups = self.mac.drain();
            let acts = self.router.drain();
            if ups.is_empty() && acts.is_empty() {
                break;
            }
            let now = self.sched.now();
            for u in ups {
                match u {
                    MacUpcall::Receive { node, from, packet } => {
                        if self.alive(node) {
                            self.router.on_receive(now, node, from, packet);
                        }
                    }
                    MacUpcall::SendDone {
                        node,
                        dst,
                        packet,
                        outcome,
                    } => {
                        if self.alive(node) {
                            self.router.on_send_done(
                                now,
                                node,
                                dst,
                                packet,
                                outcome == SendOutcome::Delivered,
                            );
                        }
                    }
                    MacUpcall::Died { node } => self.node_died(node),
                }
            }
            for a in acts {
                self.act(a);
            }
        }
    }

    fn act(&mut self, action: RouterAction) {
        match action {
            RouterAction::Broadcast { node, packet } => self.send(node, None, packet),
            RouterAction::Unicast { node, to, packet } => self.send(node, Some(to), packet),
            RouterAction::Timer { at, timer } => {
                self.sched.schedule(at, SimEvent::Router(timer));
            }
            RouterAction::Delivered { data, at, .. } => {
                self.delays.push((at - data.created).as_secs_f64());
                if let Some(log) = &mut self.deliveries {
                    log.push(data);
                }
            }
            RouterAction::Trace { at, node, event } => {
                if let Some(t) = &mut self.trace {
                    t.push(TraceRecord { at, node, event });
                }
            }
        }
    }

    fn send(&mut self, node: NodeId, to: Option<NodeId>, packet: Packet) {
        if !self.alive(node) {
            return;
        }
        if packet.is_control() {
            *self.control_tx.entry(packet.kind()).or_default() += 1;
        }
        let bytes = packet.bytes(&self.cfg.routing.sizes);
        let mut cx = MacCtx {
            sched: &mut self.sched,
            world: &mut self.world,
            energy: &mut self.energy,
        };
        let res = match to {
            Some(to) => self
                .mac
                .send_unicast(&mut cx, node, to, packet.clone(), bytes),
            None => self
                .mac
                .send_broadcast(&mut cx, node, packet.clone(), bytes),
        };
        if res.is_err() {
            self.router.on_send_refused(&packet);
        }
    }

    pub fn report(&self) -> MetricsReport {
        let stats = self.router.stats();
        let n = self.world.node_count();
        let horizon = self.cfg.horizon();
        let control: u64 = self.control_tx.values().sum();
        let per_node = self.energy.consumed().to_vec();
        let deaths = self.energy.deaths();
        let mut drops = BTreeMap::new();
        for (k, v) in &stats.data_dropped {
            drops.insert(format!("data_{}", reason_name(k)), *v);
        }
        for (k, v) in &stats.control_dropped {
            drops.insert(format!("control_{}", reason_name(k)), *v);
        }
        MetricsReport {
            protocol: self.cfg.run.protocol,
            seed: self.cfg.run.seed,
            nodes: n,
            horizon_s: horizon.as_secs_f64(),
            offered: stats.data_originated,
            delivered: stats.data_delivered,
            pdr: metrics::pdr(stats.data_delivered, stats.data_originated),
            mean_delay_s: metrics::mean(&self.delays),
            control_tx: control,
            control_by_kind: self
                .control_tx
                .iter()
                .map(|(k, v)| (kind_name(*k).to_string(), *v))
                .collect(),
            overhead_ratio: metrics::overhead_ratio(control, stats.data_delivered),
            energy_total_j: self.energy.total_consumed(),
            energy_sd_j: metrics::sample_sd(&per_node),
            energy_per_node_j: per_node,
            dead_nodes: deaths.len(),
            dead_node_timeline: metrics::dead_timeline(deaths)
                .into_iter()
                .map(|(t, c)| (t.as_secs_f64(), c))
                .collect(),
            lifetime_s: metrics::lifetime(deaths, n, horizon).as_secs_f64(),
            data_collisions: self.mac.stats().data_collisions,
            late_replies: stats.late_replies,
            drops,
            events: self.sched.executed(),
        }
    }
}

fn kind_name(k: PacketKind) -> &'static str {
    match k {
        PacketKind::Rreq => "rreq",
        PacketKind::Rrep => "rrep",
        PacketKind::Query => "query",
        PacketKind::QueryReply => "query_reply",
        PacketKind::Rerr => "rerr",
        PacketKind::Data => "data",
    }
}

fn reason_name(r: &crate::routing::DropReason) -> String {
    serde_json::to_value(r)
        .ok()
        .and_then(|v| v.as_str().map(str::to_string))
        .unwrap_or_default()
}

fn resolve_flows(
    cfg: &RunConfig,
    world: &World,
    streams: &RngStreams,
) -> Result<Vec<CbrFlow>, SimError> {
    let t = &cfg.traffic;
    let mut flows = Vec::new();
    let lookup = |name: &str| {
        world
            .lookup(name)
            .ok_or_else(|| SimError::UnknownNode(name.to_string()))
    };
    for flow in &t.flows {
        let src = lookup(&flow.src)?;
        let dst = lookup(&flow.dst)?;
        if src == dst {
            return Err(SimError::SelfFlow(flow.src.clone()));
        }
        flows.push(CbrFlow {
            id: flows.len() as u32,
            src,
            dst,
            packet_bytes: flow.packet_bytes.unwrap_or(t.packet_bytes),
            rate_bps: flow.rate_bps.unwrap_or(t.rate_bps),
            start: SimTime::from_secs_f64(flow.start_s.unwrap_or(t.start_s)),
            stop: flow.stop_s.map(SimTime::from_secs_f64),
        });
    }
    let n = world.node_count();
    if t.random_flows > 0 && n >= 2 {
        let mut rng = streams.stream(StreamPurpose::Traffic, 0);
        let mut ids: Vec<NodeId> = world.nodes().collect();
        for _ in 0..t.random_flows {
            ids.shuffle(&mut rng);
            flows.push(CbrFlow {
                id: flows.len() as u32,
                src: ids[0],
                dst: ids[1],
                packet_bytes: t.packet_bytes,
                rate_bps: t.rate_bps,
                start: SimTime::from_secs_f64(t.start_s),
                stop: None,
            });
        }
    }
    Ok(flows)
}
