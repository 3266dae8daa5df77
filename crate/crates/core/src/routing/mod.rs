//! On-demand multipath routing shared by both protocols.
//!
//! Both protocols flood RREQs under the same duplicate-acceptance rule, let
//! the destination answer every accepted copy with a source-routed RREP, and
//! install one forward record per hop for each answered path. They differ only
//! in what happens between accepting a copy and rebroadcasting it (see
//! [`zd_aomdv`]) and in how the source ranks the returned paths.
//!
//! The router never touches the MAC or the scheduler directly. It reacts to
//! inputs (packets, send completions, timers) and queues [`RouterAction`]s for
//! the simulation to carry out.

pub mod aomdv;
pub mod zd_aomdv;

use std::collections::{HashMap, HashSet, VecDeque};

use serde::Serialize;

use crate::config::{Protocol, RoutingConfig};
use crate::engine::SimTime;
use crate::packet::{DataPacket, Packet, PathKey, Rerr, Rrep, Rreq, RreqId};
use crate::trace::TraceEvent;
use crate::world::NodeId;

#[derive(Clone, Debug, PartialEq)]
pub enum RouterTimer {
    /// End of the query phase started for one accepted copy.
    Query {
        node: NodeId,
        id: RreqId,
        phase: u32,
    },
    /// The source gives up waiting for any RREP of this flood.
    RreqRetry { src: NodeId, dst: NodeId, seq: u32 },
    /// The source picks its paths among the RREPs collected so far.
    Select { src: NodeId, dst: NodeId, seq: u32 },
}

#[derive(Clone, Debug)]
pub enum RouterAction {
    Broadcast {
        node: NodeId,
        packet: Packet,
    },
    Unicast {
        node: NodeId,
        to: NodeId,
        packet: Packet,
    },
    Timer {
        at: SimTime,
        timer: RouterTimer,
    },
    Delivered {
        node: NodeId,
        data: DataPacket,
        at: SimTime,
    },
    Trace {
        at: SimTime,
        node: NodeId,
        event: TraceEvent,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    NoRoute,
    BufferFull,
    DiscoveryFailed,
    LinkBroken,
    QueueFull,
    RrepNoState,
    RrepUndeliverable,
    Ttl,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct RouterStats {
    pub data_originated: u64,
    pub data_delivered: u64,
    pub data_dropped: HashMap<DropReason, u64>,
    pub control_dropped: HashMap<DropReason, u64>,
    pub rreq_originated: u64,
    pub late_replies: u64,
    pub rediscoveries: u64,
}

impl RouterStats {
    fn drop_data(&mut self, reason: DropReason) {
        *self.data_dropped.entry(reason).or_default() += 1;
    }

    fn drop_control(&mut self, reason: DropReason) {
        *self.control_dropped.entry(reason).or_default() += 1;
    }
}

/// One stored copy of a flood at a node.
#[derive(Clone, Debug, PartialEq)]
pub struct CopyRecord {
    pub prev_hop: NodeId,
    pub first_hop: NodeId,
    pub hops: usize,
}

#[derive(Clone, Debug)]
pub struct RreqSeenEntry {
    pub receive_time: SimTime,
    /// Distinct queriers answered after this node rebroadcast the flood.
    pub after_anc: u32,
    pub rebroadcast_done: bool,
    pub copies: Vec<CopyRecord>,
    pub phases: u32,
    /// Every node that queried this one about the flood while the entry existed.
    pub queried_by: HashSet<NodeId>,
}

#[derive(Clone, Debug)]
pub(crate) struct QueryPhase {
    rreq: Rreq,
    predecessor: NodeId,
    replies: u32,
    open: bool,
}

#[derive(Clone, Debug)]
struct ForwardRecord {
    next_hop: NodeId,
    prev_hop: NodeId,
    last_used: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct FlowKey {
    src: NodeId,
    dst: NodeId,
    path: PathKey,
}

#[derive(Default)]
struct NodeState {
    seen: HashMap<RreqId, RreqSeenEntry>,
    query_seen: HashSet<(NodeId, RreqId)>,
    phases: HashMap<(RreqId, u32), QueryPhase>,
    forward: HashMap<FlowKey, ForwardRecord>,
    sources: HashMap<NodeId, SourceRoute>,
    next_seq: u32,
}

/// A path offered to the source by one RREP.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Candidate {
    pub key: PathKey,
    pub route: Vec<NodeId>,
    pub anc: u32,
    pub hops: usize,
    pub arrival: SimTime,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SourcePhase {
    Idle,
    Discovering { seq: u32, retries: u32 },
    Collecting { seq: u32 },
    Active,
}

/// Per-destination state at a traffic source.
#[derive(Clone, Debug)]
pub struct SourceRoute {
    pub phase: SourcePhase,
    pub candidates: Vec<Candidate>,
    pub selected: Vec<Candidate>,
    rr: usize,
    buffer: VecDeque<DataPacket>,
    last_used: SimTime,
}

impl SourceRoute {
    fn new() -> Self {
        Self {
            phase: SourcePhase::Idle,
            candidates: Vec::new(),
            selected: Vec::new(),
            rr: 0,
            buffer: VecDeque::new(),
            last_used: SimTime::ZERO,
        }
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }
}

/// Orders candidates and keeps the best `k`.
pub fn select_paths(protocol: Protocol, candidates: &[Candidate], k: usize) -> Vec<Candidate> {
    let mut sorted = candidates.to_vec();
    match protocol {
        Protocol::ZdAomdv => sorted.sort_by(zd_aomdv::rank),
        Protocol::Aomdv => sorted.sort_by(aomdv::rank),
    }
    sorted.truncate(k);
    sorted
}

pub struct Router {
    protocol: Protocol,
    cfg: RoutingConfig,
    nodes: Vec<NodeState>,
    out: Vec<RouterAction>,
    stats: RouterStats,
    trace: bool,
}

impl Router {
    pub fn new(protocol: Protocol, cfg: RoutingConfig, n: usize) -> Self {
        Self {
            protocol,
            cfg,
            nodes: (0..n).map(|_| NodeState::default()).collect(),
            out: Vec::new(),
            stats: RouterStats::default(),
            trace: false,
        }
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn config(&self) -> &RoutingConfig {
        &self.cfg
    }

    pub fn set_trace(&mut self, on: bool) {
        self.trace = on;
    }

    pub fn stats(&self) -> &RouterStats {
        &self.stats
    }

    pub fn drain(&mut self) -> Vec<RouterAction> {
        std::mem::take(&mut self.out)
    }

    pub fn seen_entry(&self, node: NodeId, id: RreqId) -> Option<&RreqSeenEntry> {
        self.nodes[node.index()].seen.get(&id)
    }

    pub fn seen_entries(&self, node: NodeId) -> impl Iterator<Item = (&RreqId, &RreqSeenEntry)> {
        self.nodes[node.index()].seen.iter()
    }

    pub fn source_route(&self, src: NodeId, dst: NodeId) -> Option<&SourceRoute> {
        self.nodes[src.index()].sources.get(&dst)
    }

    fn emit(&mut self, at: SimTime, node: NodeId, event: TraceEvent) {
        if self.trace {
            self.out.push(RouterAction::Trace { at, node, event });
        }
    }

    fn broadcast(&mut self, node: NodeId, packet: Packet) {
        self.out.push(RouterAction::Broadcast { node, packet });
    }

    fn unicast(&mut self, node: NodeId, to: NodeId, packet: Packet) {
        self.out.push(RouterAction::Unicast { node, to, packet });
    }

    fn timer(&mut self, at: SimTime, timer: RouterTimer) {
        self.out.push(RouterAction::Timer { at, timer });
    }

    // ---- source side -------------------------------------------------------

    /// Accepts a data packet generated by a traffic source.
    pub fn send_data(&mut self, now: SimTime, data: DataPacket) {
        self.stats.data_originated += 1;
        let (src, dst) = (data.src, data.dst);
        let cap = self.cfg.buffer_capacity;
        let route = self.nodes[src.index()]
            .sources
            .entry(dst)
            .or_insert_with(SourceRoute::new);
        if route.phase == SourcePhase::Active {
            self.dispatch(now, data);
            return;
        }
        if route.buffer.len() >= cap {
            self.stats.drop_data(DropReason::BufferFull);
        } else {
            route.buffer.push_back(data);
        }
        if route.phase == SourcePhase::Idle {
            self.originate(now, src, dst, 0);
        }
    }

    /// Floods a fresh RREQ for `dst`.
    pub fn originate(&mut self, now: SimTime, src: NodeId, dst: NodeId, retries: u32) {
        let st = &mut self.nodes[src.index()];
        st.next_seq += 1;
        let seq = st.next_seq;
        let route = st.sources.entry(dst).or_insert_with(SourceRoute::new);
        route.phase = SourcePhase::Discovering { seq, retries };
        route.candidates.clear();
        route.selected.clear();
        let id = RreqId { origin: src, seq };
        self.stats.rreq_originated += 1;
        self.emit(now, src, TraceEvent::RreqOriginate { id, dst });
        self.broadcast(
            src,
            Packet::Rreq(Rreq {
                id,
                src,
                dst,
                active_neighbor_count: 0,
                traversed: Vec::new(),
            }),
        );
        self.timer(
            now + self.cfg.rreq_retry_timeout(),
            RouterTimer::RreqRetry { src, dst, seq },
        );
    }

    fn on_rreq_retry(&mut self, now: SimTime, src: NodeId, dst: NodeId, seq: u32) {
        let max = self.cfg.rreq_retries;
        let Some(route) = self.nodes[src.index()].sources.get_mut(&dst) else {
            return;
        };
        let SourcePhase::Discovering { seq: cur, retries } = route.phase else {
            return;
        };
        if cur != seq {
            return;
        }
        if retries < max {
            self.originate(now, src, dst, retries + 1);
        } else {
            let lost = route.buffer.len() as u64;
            route.buffer.clear();
            route.phase = SourcePhase::Idle;
            *self
                .stats
                .data_dropped
                .entry(DropReason::DiscoveryFailed)
                .or_default() += lost;
            self.emit(now, src, TraceEvent::DiscoveryFailed { dst });
        }
    }

    fn on_rrep_at_source(&mut self, now: SimTime, src: NodeId, rrep: Rrep) {
        let dst = rrep.dst();
        let route = self.nodes[src.index()]
            .sources
            .entry(dst)
            .or_insert_with(SourceRoute::new);
        let seq = match route.phase {
            SourcePhase::Discovering { seq, .. } | SourcePhase::Collecting { seq } => seq,
            _ => {
                self.emit(now, src, TraceEvent::RrepIgnored { id: rrep.for_rreq });
                return;
            }
        };
        if rrep.for_rreq.seq != seq {
            self.emit(now, src, TraceEvent::RrepIgnored { id: rrep.for_rreq });
            return;
        }
        let first = route.candidates.is_empty();
        route.candidates.push(Candidate {
            key: rrep.path_key,
            route: rrep.route.clone(),
            anc: rrep.active_neighbor_count,
            hops: rrep.hop_count(),
            arrival: now,
        });
        route.phase = SourcePhase::Collecting { seq };
        self.emit(
            now,
            src,
            TraceEvent::RrepArrive {
                id: rrep.for_rreq,
                route: rrep.route,
                anc: rrep.active_neighbor_count,
            },
        );
        if first {
            self.timer(
                now + self.cfg.rrep_wait(),
                RouterTimer::Select { src, dst, seq },
            );
        }
    }

    fn on_select(&mut self, now: SimTime, src: NodeId, dst: NodeId, seq: u32) {
        let k = self.cfg.k_paths;
        let protocol = self.protocol;
        let Some(route) = self.nodes[src.index()].sources.get_mut(&dst) else {
            return;
        };
        if route.phase != (SourcePhase::Collecting { seq }) {
            return;
        }
        route.selected = select_paths(protocol, &route.candidates, k);
        route.phase = SourcePhase::Active;
        route.rr = 0;
        route.last_used = now;
        let chosen: Vec<(Vec<NodeId>, u32)> = route
            .selected
            .iter()
            .map(|c| (c.route.clone(), c.anc))
            .collect();
        let selected = route.selected.clone();
        let pending: Vec<DataPacket> = route.buffer.drain(..).collect();
        for c in &selected {
            self.nodes[src.index()].forward.insert(
                FlowKey {
                    src,
                    dst,
                    path: c.key,
                },
                ForwardRecord {
                    next_hop: c.route[1],
                    prev_hop: src,
                    last_used: now,
                },
            );
        }
        self.emit(now, src, TraceEvent::PathsSelected { dst, paths: chosen });
        for data in pending {
            self.dispatch(now, data);
        }
    }

    /// Sends a source packet on the next selected path, round robin.
    fn dispatch(&mut self, now: SimTime, mut data: DataPacket) {
        let (src, dst) = (data.src, data.dst);
        let idle_limit = self.cfg.path_idle_lifetime();
        let route = self.nodes[src.index()]
            .sources
            .get_mut(&dst)
            .expect("source state exists");
        if now.saturating_sub(route.last_used) > idle_limit {
            route.selected.clear();
        }
        if route.selected.is_empty() {
            route.buffer.push_back(data);
            route.phase = SourcePhase::Idle;
            self.originate(now, src, dst, 0);
            return;
        }
        let path = route.selected[route.rr % route.selected.len()].clone();
        route.rr = (route.rr + 1) % route.selected.len();
        route.last_used = now;
        data.path_key = path.key;
        data.hops = vec![src];
        self.forward_data(now, src, data);
    }

    // ---- forwarding --------------------------------------------------------

    fn forward_data(&mut self, now: SimTime, node: NodeId, data: DataPacket) {
        let key = FlowKey {
            src: data.src,
            dst: data.dst,
            path: data.path_key,
        };
        let idle_limit = self.cfg.path_idle_lifetime();
        let st = &mut self.nodes[node.index()];
        let next = match st.forward.get_mut(&key) {
            Some(rec) if now.saturating_sub(rec.last_used) <= idle_limit => {
                rec.last_used = now;
                Some(rec.next_hop)
            }
            Some(_) => {
                st.forward.remove(&key);
                None
            }
            None => None,
        };
        match next {
            Some(next) => self.unicast(node, next, Packet::Data(data)),
            None => {
                self.stats.drop_data(DropReason::NoRoute);
                self.emit(
                    now,
                    node,
                    TraceEvent::DataDrop {
                        flow: data.flow,
                        seq: data.seq,
                        reason: DropReason::NoRoute,
                    },
                );
            }
        }
    }

    fn on_data(&mut self, now: SimTime, node: NodeId, mut data: DataPacket) {
        data.hops.push(node);
        if node == data.dst {
            self.stats.data_delivered += 1;
            self.emit(
                now,
                node,
                TraceEvent::DataDeliver {
                    flow: data.flow,
                    seq: data.seq,
                    delay: now - data.created,
                },
            );
            self.out.push(RouterAction::Delivered {
                node,
                data,
                at: now,
            });
        } else {
            self.forward_data(now, node, data);
        }
    }

    // ---- discovery ---------------------------------------------------------

    /// Duplicate-acceptance rule shared by both protocols. Returns whether the
    /// copy is to be processed further, recording it if so.
    fn accept_copy(&mut self, now: SimTime, node: NodeId, from: NodeId, rreq: &Rreq) -> bool {
        if node == rreq.src || rreq.traversed.contains(&node) {
            return false;
        }
        let lifetime = self.cfg.rreq_seen_lifetime();
        let record = CopyRecord {
            prev_hop: from,
            first_hop: rreq.first_hop().unwrap_or(node),
            hops: rreq.hop_count(),
        };
        let st = &mut self.nodes[node.index()];
        let entry = st.seen.entry(rreq.id).or_insert_with(|| RreqSeenEntry {
            receive_time: now,
            after_anc: 0,
            rebroadcast_done: false,
            copies: Vec::new(),
            phases: 0,
            queried_by: HashSet::new(),
        });
        if now.saturating_sub(entry.receive_time) > lifetime {
            return false;
        }
        if entry.copies.is_empty() {
            entry.copies.push(record);
            return true;
        }
        let new_prev = entry.copies.iter().all(|c| c.prev_hop != record.prev_hop);
        let same_founder: Vec<usize> = entry
            .copies
            .iter()
            .filter(|c| c.first_hop == record.first_hop)
            .map(|c| c.hops)
            .collect();
        let improves = same_founder.is_empty() || same_founder.iter().all(|&h| record.hops < h);
        if new_prev && improves {
            entry.copies.push(record);
            true
        } else {
            false
        }
    }

    fn on_rreq(&mut self, now: SimTime, node: NodeId, from: NodeId, rreq: Rreq) {
        let accepted = self.accept_copy(now, node, from, &rreq);
        self.emit(
            now,
            node,
            TraceEvent::RreqRecv {
                id: rreq.id,
                from,
                anc: rreq.active_neighbor_count,
                hops: rreq.hop_count(),
                accepted,
            },
        );
        if !accepted {
            return;
        }
        if node == rreq.dst {
            self.reply_rrep(now, node, from, &rreq);
            return;
        }
        if rreq.hop_count() + 1 > self.cfg.ttl_max as usize {
            self.stats.drop_control(DropReason::Ttl);
            return;
        }
        let entry = self.nodes[node.index()]
            .seen
            .get_mut(&rreq.id)
            .expect("accepted copy has an entry");
        if entry.phases >= self.cfg.rebroadcast_cap {
            return;
        }
        entry.phases += 1;
        let phase = entry.phases - 1;
        match self.protocol {
            Protocol::ZdAomdv => self.start_query_phase(now, node, from, rreq, phase),
            Protocol::Aomdv => aomdv::rebroadcast(self, now, node, rreq),
        }
    }

    /// Rebroadcasts a copy with `extra` added to its counter.
    fn rebroadcast(&mut self, now: SimTime, node: NodeId, mut rreq: Rreq, extra: u32) {
        rreq.active_neighbor_count += extra;
        rreq.traversed.push(node);
        if let Some(e) = self.nodes[node.index()].seen.get_mut(&rreq.id) {
            e.rebroadcast_done = true;
        }
        self.emit(
            now,
            node,
            TraceEvent::RreqRebroadcast {
                id: rreq.id,
                anc: rreq.active_neighbor_count,
                hops: rreq.hop_count(),
            },
        );
        self.broadcast(node, Packet::Rreq(rreq));
    }

    /// The destination answers every accepted copy.
    fn reply_rrep(&mut self, now: SimTime, node: NodeId, from: NodeId, rreq: &Rreq) {
        let mut route = Vec::with_capacity(rreq.traversed.len() + 2);
        route.push(rreq.src);
        route.extend_from_slice(&rreq.traversed);
        route.push(node);
        let rrep = Rrep {
            for_rreq: rreq.id,
            path_key: PathKey {
                seq: rreq.id.seq,
                first_hop: rreq.first_hop().unwrap_or(node),
                last_hop: from,
            },
            active_neighbor_count: rreq.active_neighbor_count,
            cursor: route.len() - 1,
            route,
        };
        self.emit(
            now,
            node,
            TraceEvent::RrepSend {
                id: rreq.id,
                anc: rrep.active_neighbor_count,
                to: from,
            },
        );
        self.unicast(node, from, Packet::Rrep(rrep));
    }

    fn on_rrep(&mut self, now: SimTime, node: NodeId, from: NodeId, mut rrep: Rrep) {
        if rrep.cursor == 0 || rrep.route.get(rrep.cursor - 1) != Some(&node) {
            self.stats.drop_control(DropReason::RrepNoState);
            return;
        }
        rrep.cursor -= 1;
        if rrep.cursor == 0 {
            self.on_rrep_at_source(now, node, rrep);
            return;
        }
        let lifetime = self.cfg.rreq_seen_lifetime();
        let after = match self.nodes[node.index()].seen.get(&rrep.for_rreq) {
            Some(e) if now.saturating_sub(e.receive_time) <= lifetime => e.after_anc,
            _ => {
                self.stats.drop_control(DropReason::RrepNoState);
                self.emit(now, node, TraceEvent::RrepDrop { id: rrep.for_rreq });
                return;
            }
        };
        let before = rrep.active_neighbor_count;
        if self.protocol == Protocol::ZdAomdv {
            rrep.active_neighbor_count += after;
        }
        let prev = rrep.route[rrep.cursor - 1];
        self.nodes[node.index()].forward.insert(
            FlowKey {
                src: rrep.src(),
                dst: rrep.dst(),
                path: rrep.path_key,
            },
            ForwardRecord {
                next_hop: from,
                prev_hop: prev,
                last_used: now,
            },
        );
        self.emit(
            now,
            node,
            TraceEvent::RrepForward {
                id: rrep.for_rreq,
                before,
                after: rrep.active_neighbor_count,
                to: prev,
            },
        );
        self.unicast(node, prev, Packet::Rrep(rrep));
    }

    // ---- maintenance -------------------------------------------------------

    /// Removes the record of a broken path at `node` and reports it upstream.
    fn break_path(&mut self, now: SimTime, node: NodeId, src: NodeId, dst: NodeId, path: PathKey) {
        let key = FlowKey { src, dst, path };
        if node == src {
            self.nodes[node.index()].forward.remove(&key);
            self.source_path_lost(now, src, dst, path);
            return;
        }
        if let Some(rec) = self.nodes[node.index()].forward.remove(&key) {
            self.emit(now, node, TraceEvent::RerrSend { to: rec.prev_hop });
            self.unicast(
                node,
                rec.prev_hop,
                Packet::Rerr(Rerr {
                    src,
                    dst,
                    path_key: path,
                }),
            );
        }
    }

    fn on_rerr(&mut self, now: SimTime, node: NodeId, rerr: Rerr) {
        self.break_path(now, node, rerr.src, rerr.dst, rerr.path_key);
    }

    fn source_path_lost(&mut self, now: SimTime, src: NodeId, dst: NodeId, path: PathKey) {
        let Some(route) = self.nodes[src.index()].sources.get_mut(&dst) else {
            return;
        };
        let before = route.selected.len();
        route.selected.retain(|c| c.key != path);
        if route.selected.len() == before {
            return;
        }
        let remaining = route.selected.len();
        let active = route.phase == SourcePhase::Active;
        self.emit(now, src, TraceEvent::PathLost { dst, remaining });
        if remaining == 0 && active {
            self.stats.rediscoveries += 1;
            self.originate(now, src, dst, 0);
        }
    }

    /// A unicast handed to the MAC finished.
    pub fn on_send_done(
        &mut self,
        now: SimTime,
        node: NodeId,
        _to: NodeId,
        packet: Packet,
        delivered: bool,
    ) {
        if delivered {
            return;
        }
        match packet {
            Packet::Data(data) => {
                let (src, dst, path) = (data.src, data.dst, data.path_key);
                self.break_path(now, node, src, dst, path);
                if node == src {
                    // Salvage at the source while other paths remain.
                    let active = self.nodes[src.index()]
                        .sources
                        .get(&dst)
                        .is_some_and(|r| !r.selected.is_empty());
                    if active {
                        self.dispatch(now, data);
                        return;
                    }
                    if let Some(route) = self.nodes[src.index()].sources.get_mut(&dst) {
                        if route.buffer.len() < self.cfg.buffer_capacity {
                            route.buffer.push_back(data);
                            return;
                        }
                    }
                }
                self.stats.drop_data(DropReason::LinkBroken);
            }
            Packet::Rrep(_) => self.stats.drop_control(DropReason::RrepUndeliverable),
            _ => self.stats.drop_control(DropReason::LinkBroken),
        }
    }

    /// The MAC refused a packet outright.
    pub fn on_send_refused(&mut self, packet: &Packet) {
        match packet {
            Packet::Data(_) => self.stats.drop_data(DropReason::QueueFull),
            _ => self.stats.drop_control(DropReason::QueueFull),
        }
    }

    pub fn on_receive(&mut self, now: SimTime, node: NodeId, from: NodeId, packet: Packet) {
        match packet {
            Packet::Rreq(r) => self.on_rreq(now, node, from, r),
            Packet::Rrep(r) => self.on_rrep(now, node, from, r),
            Packet::Query(q) => self.on_query(now, node, from, q),
            Packet::QueryReply(r) => self.on_query_reply(now, node, from, r),
            Packet::Rerr(r) => self.on_rerr(now, node, r),
            Packet::Data(d) => self.on_data(now, node, d),
        }
    }

    pub fn on_timer(&mut self, now: SimTime, timer: RouterTimer) {
        match timer {
            RouterTimer::Query { node, id, phase } => self.on_query_timer(now, node, id, phase),
            RouterTimer::RreqRetry { src, dst, seq } => self.on_rreq_retry(now, src, dst, seq),
            RouterTimer::Select { src, dst, seq } => self.on_select(now, src, dst, seq),
        }
    }

    /// Drops expired flood state. Forward records expire lazily.
    pub fn housekeep(&mut self, now: SimTime) {
        let lifetime = self.cfg.rreq_seen_lifetime();
        for st in &mut self.nodes {
            st.seen
                .retain(|_, e| now.saturating_sub(e.receive_time) <= lifetime);
            let live: HashSet<RreqId> = st.seen.keys().copied().collect();
            st.query_seen.retain(|(_, id)| live.contains(id));
            st.phases.retain(|(id, _), p| p.open || live.contains(id));
        }
    }

    /// Forgets everything a node knew once its battery is exhausted.
    pub fn on_node_dead(&mut self, node: NodeId) {
        let st = &mut self.nodes[node.index()];
        st.phases.clear();
        st.forward.clear();
        for route in st.sources.values_mut() {
            let lost = route.buffer.len() as u64;
            route.buffer.clear();
            route.phase = SourcePhase::Idle;
            route.selected.clear();
            *self
                .stats
                .data_dropped
                .entry(DropReason::LinkBroken)
                .or_default() += lost;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cand(seq: u32, anc: u32, hops: usize, arrival: u64) -> Candidate {
        Candidate {
            key: PathKey {
                seq,
                first_hop: NodeId(arrival as u32),
                last_hop: NodeId(0),
            },
            route: vec![NodeId(0); hops + 1],
            anc,
            hops,
            arrival: SimTime(arrival),
        }
    }

    #[test]
    fn zd_selection_prefers_low_count_then_hops() {
        let cs = vec![cand(1, 5, 5, 1), cand(1, 5, 3, 2), cand(1, 5, 4, 3)];
        let sel = select_paths(Protocol::ZdAomdv, &cs, 2);
        assert_eq!(sel.iter().map(|c| c.hops).collect::<Vec<_>>(), vec![3, 4]);
    }

    #[test]
    fn baseline_selection_by_hops() {
        let cs = vec![
            cand(1, 0, 5, 1),
            cand(1, 9, 3, 2),
            cand(1, 0, 2, 3),
            cand(1, 1, 3, 4),
        ];
        let sel = select_paths(Protocol::Aomdv, &cs, 3);
        assert_eq!(
            sel.iter().map(|c| c.hops).collect::<Vec<_>>(),
            vec![2, 3, 3]
        );
    }

    #[test]
    fn single_candidate_is_selected() {
        let cs = vec![cand(1, 2, 2, 1)];
        assert_eq!(select_paths(Protocol::ZdAomdv, &cs, 3), cs);
    }

    fn rreq(src: u32, traversed: &[u32]) -> Rreq {
        Rreq {
            id: RreqId {
                origin: NodeId(src),
                seq: 1,
            },
            src: NodeId(src),
            dst: NodeId(99),
            active_neighbor_count: 0,
            traversed: traversed.iter().map(|&n| NodeId(n)).collect(),
        }
    }

    #[test]
    fn duplicate_acceptance() {
        let mut r = Router::new(Protocol::Aomdv, RoutingConfig::default(), 100);
        let me = NodeId(5);
        let t = SimTime::ZERO;
        // loop and origin
        assert!(!r.accept_copy(t, me, NodeId(1), &rreq(0, &[1, 5])));
        assert!(!r.accept_copy(t, NodeId(0), NodeId(1), &rreq(0, &[1])));
        assert!(r.accept_copy(t, me, NodeId(2), &rreq(0, &[1, 2])));
        // same neighbour again
        assert!(!r.accept_copy(t, me, NodeId(2), &rreq(0, &[3, 2])));
        // same founder, same length, new neighbour
        assert!(!r.accept_copy(t, me, NodeId(4), &rreq(0, &[1, 4])));
        // same founder, shorter
        assert!(r.accept_copy(t, me, NodeId(1), &rreq(0, &[1])));
        // new founder via new neighbour
        assert!(r.accept_copy(t, me, NodeId(7), &rreq(0, &[7])));
        assert_eq!(r.seen_entry(me, rreq(0, &[]).id).unwrap().copies.len(), 3);
    }
}
