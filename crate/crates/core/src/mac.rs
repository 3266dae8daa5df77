//! Simplified 802.11 DCF over a unit-disk channel.
//!
//! Carrier sense sees exactly the frames in radio range. A reception succeeds
//! iff no other frame overlaps it at the receiver and the receiver does not
//! transmit meanwhile; there is no capture. Unicast uses RTS/CTS/DATA/ACK when
//! the frame exceeds the RTS threshold (and `rts_cts` is on), DATA/ACK
//! otherwise. Broadcasts are a single unacknowledged frame preceded by a
//! random jitter.
//!
//! With `ideal_channel` set, the DCF is bypassed entirely: every frame is
//! delivered to every in-range node after the per-link latency and nothing is
//! ever lost.

use std::collections::{HashMap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::MacConfig;
use crate::energy::{ChargeOutcome, Energy, EnergyRole};
use crate::engine::{RngStreams, Scheduler, SimTime, StreamPurpose, Ticket};
use crate::packet::Packet;
use crate::world::{NodeId, Subscription, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum FrameKind {
    Rts,
    Cts,
    Data,
    Ack,
    Bcast,
}

#[derive(Clone, Debug)]
pub struct Frame {
    pub kind: FrameKind,
    pub src: NodeId,
    /// `None` for broadcasts.
    pub dst: Option<NodeId>,
    /// Remaining exchange time announced for NAV, counted from frame end.
    pub nav: SimTime,
    pub bytes: u32,
    seq: u64,
    pub payload: Option<Packet>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SendOutcome {
    Delivered,
    NoCts,
    NoAck,
    /// Ideal channel only: the receiver was out of range.
    Unreachable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SendError {
    QueueFull,
    DeadNode,
}

#[derive(Clone, Debug)]
pub enum MacUpcall {
    Receive {
        node: NodeId,
        from: NodeId,
        packet: Packet,
    },
    SendDone {
        node: NodeId,
        dst: NodeId,
        packet: Packet,
        outcome: SendOutcome,
    },
    /// A charge made by the MAC exhausted this node's budget.
    Died { node: NodeId },
}

pub enum MacEvent {
    Enqueue {
        node: NodeId,
        item: QueueItem,
    },
    Access {
        node: NodeId,
    },
    TxEnd {
        frame: u64,
    },
    Respond {
        node: NodeId,
        frame: Frame,
    },
    Timeout {
        node: NodeId,
    },
    NavEnd {
        node: NodeId,
    },
    IdealArrive {
        from: NodeId,
        to: NodeId,
        packet: Packet,
    },
    IdealDone {
        node: NodeId,
        dst: NodeId,
        packet: Packet,
        delivered: bool,
    },
}

pub struct QueueItem {
    dst: Option<NodeId>,
    packet: Packet,
    bytes: u32,
    seq: u64,
    attempts: u32,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum TxState {
    Idle,
    Contend,
    WaitCts,
    /// CTS received, DATA due after SIFS or on air.
    Sending,
    WaitAck,
}

struct Incoming {
    frame: u64,
    end: SimTime,
    corrupted: bool,
}

struct NodeMac {
    queue: VecDeque<QueueItem>,
    state: TxState,
    cw: u32,
    residual: u64,
    access: Option<Ticket>,
    access_at: SimTime,
    countdown_start: SimTime,
    timeout: Option<Ticket>,
    nav_until: SimTime,
    nav_timer: Option<Ticket>,
    tx_until: SimTime,
    incoming: Vec<Incoming>,
    next_seq: u64,
    last_seq_from: HashMap<NodeId, u64>,
    rng: ChaCha8Rng,
}

struct OnAir {
    frame: Frame,
    start: SimTime,
    receivers: Vec<NodeId>,
}

/// Counters and, when enabled, an interval audit used by the invariant tests.
#[derive(Clone, Debug, Default, Serialize)]
pub struct MacStats {
    pub frames: HashMap<FrameKind, u64>,
    /// DATA frames lost to a collision at their addressed receiver.
    pub data_collisions: u64,
    /// Any corrupted reception, including overheard ones.
    pub corrupted_receptions: u64,
    pub queue_drops: u64,
    pub cts_suppressed: u64,
    pub nav_violations: u64,
    pub max_attempts: u32,
    pub failures: u64,
}

#[derive(Clone, Debug, Default)]
pub struct MacAudit {
    /// (node, start, end) of every transmission.
    pub tx: Vec<(NodeId, SimTime, SimTime)>,
    /// (node, start, end) of every successfully decoded reception.
    pub rx: Vec<(NodeId, SimTime, SimTime)>,
    /// (node, set at, nav until) for every NAV update.
    pub nav: Vec<(NodeId, SimTime, SimTime)>,
    /// (node, time) of every frame a node started on its own initiative.
    pub initiations: Vec<(NodeId, SimTime)>,
    /// (receiver, time) of every DATA collision at its addressed receiver.
    pub data_collisions: Vec<(NodeId, SimTime)>,
}

/// Borrowed simulation context the MAC operates in.
pub struct MacCtx<'a, E> {
    pub sched: &'a mut Scheduler<E>,
    pub world: &'a mut World,
    pub energy: &'a mut Energy,
}

type ReceiveHook = Box<dyn FnMut(NodeId, NodeId, &Packet)>;

pub struct Mac {
    cfg: MacConfig,
    nodes: Vec<NodeMac>,
    on_air: HashMap<u64, OnAir>,
    next_frame: u64,
    out: Vec<MacUpcall>,
    hooks: Vec<(usize, ReceiveHook)>,
    next_hook: usize,
    stats: MacStats,
    audit: Option<MacAudit>,
}

impl Mac {
    pub fn new(cfg: MacConfig, n: usize, streams: &RngStreams) -> Self {
        let nodes = (0..n)
            .map(|i| NodeMac {
                queue: VecDeque::new(),
                state: TxState::Idle,
                cw: cfg.cw_min,
                residual: 0,
                access: None,
                access_at: SimTime::ZERO,
                countdown_start: SimTime::ZERO,
                timeout: None,
                nav_until: SimTime::ZERO,
                nav_timer: None,
                tx_until: SimTime::ZERO,
                incoming: Vec::new(),
                next_seq: 0,
                last_seq_from: HashMap::new(),
                rng: streams.stream(StreamPurpose::Mac, i as u64),
            })
            .collect();
        Self {
            cfg,
            nodes,
            on_air: HashMap::new(),
            next_frame: 0,
            out: Vec::new(),
            hooks: Vec::new(),
            next_hook: 0,
            stats: MacStats::default(),
            audit: None,
        }
    }

    pub fn config(&self) -> &MacConfig {
        &self.cfg
    }

    pub fn enable_audit(&mut self) {
        self.audit = Some(MacAudit::default());
    }

    pub fn audit(&self) -> Option<&MacAudit> {
        self.audit.as_ref()
    }

    pub fn stats(&self) -> &MacStats {
        &self.stats
    }

    pub fn queue_len(&self, node: NodeId) -> usize {
        self.nodes[node.index()].queue.len()
    }

    pub fn nav_until(&self, node: NodeId) -> SimTime {
        self.nodes[node.index()].nav_until
    }

    /// Hook invoked once per decoded frame addressed to a node (or broadcast),
    /// with `(node, from, packet)`.
    pub fn on_receive<F>(&mut self, hook: F) -> Subscription
    where
        F: FnMut(NodeId, NodeId, &Packet) + 'static,
    {
        let id = self.next_hook;
        self.next_hook += 1;
        self.hooks.push((id, Box::new(hook)));
        Subscription::from_raw(id)
    }

    pub fn unsubscribe(&mut self, sub: Subscription) {
        self.hooks.retain(|(id, _)| *id != sub.raw());
    }

    /// Upcalls produced since the last drain, in causal order.
    pub fn drain(&mut self) -> Vec<MacUpcall> {
        std::mem::take(&mut self.out)
    }

    fn emit_receive(&mut self, node: NodeId, from: NodeId, packet: Packet) {
        for (_, hook) in &mut self.hooks {
            hook(node, from, &packet);
        }
        self.out.push(MacUpcall::Receive { node, from, packet });
    }

    pub fn send_unicast<E: From<MacEvent>>(
        &mut self,
        cx: &mut MacCtx<'_, E>,
        src: NodeId,
        dst: NodeId,
        packet: Packet,
        bytes: u32,
    ) -> Result<(), SendError> {
        if !cx.energy.is_alive(src) {
            return Err(SendError::DeadNode);
        }
        if self.cfg.ideal_channel {
            let now = cx.sched.now();
            self.count(FrameKind::Data);
            let delivered = cx.world.in_range(src, dst, now);
            let at = now + self.ideal_latency(cx.world, src, dst);
            if delivered {
                cx.sched.schedule(
                    at,
                    MacEvent::IdealArrive {
                        from: src,
                        to: dst,
                        packet: packet.clone(),
                    }
                    .into(),
                );
            }
            cx.sched.schedule(
                at,
                MacEvent::IdealDone {
                    node: src,
                    dst,
                    packet,
                    delivered,
                }
                .into(),
            );
            return Ok(());
        }
        let item = self.item(src, Some(dst), packet, bytes);
        if !self.enqueue(src, item) {
            return Err(SendError::QueueFull);
        }
        self.kick(cx, src);
        Ok(())
    }

    pub fn send_broadcast<E: From<MacEvent>>(
        &mut self,
        cx: &mut MacCtx<'_, E>,
        src: NodeId,
        packet: Packet,
        bytes: u32,
    ) -> Result<(), SendError> {
        if !cx.energy.is_alive(src) {
            return Err(SendError::DeadNode);
        }
        let now = cx.sched.now();
        if self.cfg.ideal_channel {
            self.count(FrameKind::Bcast);
            for nb in cx.world.neighbors_of(src, now) {
                let at = now + self.ideal_latency(cx.world, src, nb);
                cx.sched.schedule(
                    at,
                    MacEvent::IdealArrive {
                        from: src,
                        to: nb,
                        packet: packet.clone(),
                    }
                    .into(),
                );
            }
            return Ok(());
        }
        let item = self.item(src, None, packet, bytes);
        let jitter = match self.cfg.broadcast_jitter_us {
            0 => 0,
            j => self.nodes[src.index()].rng.gen_range(0..=j),
        };
        cx.sched.schedule(
            now + SimTime(jitter),
            MacEvent::Enqueue { node: src, item }.into(),
        );
        Ok(())
    }

    fn ideal_latency(&self, world: &World, a: NodeId, b: NodeId) -> SimTime {
        world
            .link_latency(a, b)
            .unwrap_or(SimTime(self.cfg.ideal_latency_us))
    }

    fn item(&mut self, src: NodeId, dst: Option<NodeId>, packet: Packet, bytes: u32) -> QueueItem {
        let st = &mut self.nodes[src.index()];
        st.next_seq += 1;
        QueueItem {
            dst,
            packet,
            bytes,
            seq: st.next_seq,
            attempts: 0,
        }
    }

    fn enqueue(&mut self, node: NodeId, item: QueueItem) -> bool {
        let st = &mut self.nodes[node.index()];
        if st.queue.len() >= self.cfg.queue_capacity {
            self.stats.queue_drops += 1;
            return false;
        }
        st.queue.push_back(item);
        true
    }

    fn count(&mut self, kind: FrameKind) {
        *self.stats.frames.entry(kind).or_default() += 1;
    }

    /// Drops all MAC state of a node that just died.
    pub fn kill<E>(&mut self, sched: &mut Scheduler<E>, node: NodeId) {
        let st = &mut self.nodes[node.index()];
        for t in [st.access.take(), st.timeout.take(), st.nav_timer.take()]
            .into_iter()
            .flatten()
        {
            sched.cancel(t);
        }
        st.queue.clear();
        st.state = TxState::Idle;
    }

    fn medium_idle(&self, node: NodeId, now: SimTime) -> bool {
        let st = &self.nodes[node.index()];
        st.tx_until <= now && st.nav_until <= now && st.incoming.iter().all(|r| r.end <= now)
    }

    /// Starts contention for the head of the queue if the node is idle.
    fn kick<E: From<MacEvent>>(&mut self, cx: &mut MacCtx<'_, E>, node: NodeId) {
        let st = &mut self.nodes[node.index()];
        if st.state != TxState::Idle || st.queue.is_empty() || !cx.energy.is_alive(node) {
            return;
        }
        st.state = TxState::Contend;
        st.residual = st.rng.gen_range(0..=st.cw) as u64;
        self.reevaluate(cx, node);
    }

    /// Runs or freezes the backoff countdown after any change in what the
    /// node senses.
    fn reevaluate<E: From<MacEvent>>(&mut self, cx: &mut MacCtx<'_, E>, node: NodeId) {
        let now = cx.sched.now();
        let idle = self.medium_idle(node, now);
        let slot = self.cfg.slot();
        let difs = self.cfg.difs();
        let st = &mut self.nodes[node.index()];
        if st.state != TxState::Contend {
            return;
        }
        if idle {
            if st.access.is_none() {
                st.countdown_start = now + difs;
                let fire = st.countdown_start + SimTime(slot.0 * st.residual);
                st.access_at = fire;
                st.access = Some(cx.sched.schedule(fire, MacEvent::Access { node }.into()));
            }
        } else if st.access.is_some() && st.access_at == now {
            // Busy since this very instant: carrier sense cannot react within
            // the slot, so the countdown completes and the frames collide.
        } else if let Some(t) = st.access.take() {
            cx.sched.cancel(t);
            if now > st.countdown_start {
                let done = (now - st.countdown_start).0 / slot.0;
                st.residual -= done.min(st.residual);
            }
        }
    }

    pub fn handle<E: From<MacEvent>>(&mut self, cx: &mut MacCtx<'_, E>, ev: MacEvent) {
        match ev {
            MacEvent::Enqueue { node, item } => {
                if cx.energy.is_alive(node) && self.enqueue(node, item) {
                    self.kick(cx, node);
                }
            }
            MacEvent::Access { node } => self.on_access(cx, node),
            MacEvent::TxEnd { frame } => self.on_tx_end(cx, frame),
            MacEvent::Respond { node, frame } => self.on_respond(cx, node, frame),
            MacEvent::Timeout { node } => self.on_timeout(cx, node),
            MacEvent::NavEnd { node } => {
                self.nodes[node.index()].nav_timer = None;
                self.reevaluate(cx, node);
            }
            MacEvent::IdealArrive { from, to, packet } => {
                if cx.energy.is_alive(to) {
                    self.emit_receive(to, from, packet);
                }
            }
            MacEvent::IdealDone {
                node,
                dst,
                packet,
                delivered,
            } => {
                let outcome = if delivered {
                    SendOutcome::Delivered
                } else {
                    SendOutcome::Unreachable
                };
                self.out.push(MacUpcall::SendDone {
                    node,
                    dst,
                    packet,
                    outcome,
                });
            }
        }
    }

    fn on_access<E: From<MacEvent>>(&mut self, cx: &mut MacCtx<'_, E>, node: NodeId) {
        let now = cx.sched.now();
        let cfg = self.cfg.clone();
        let st = &mut self.nodes[node.index()];
        st.access = None;
        if st.state != TxState::Contend || !cx.energy.is_alive(node) {
            return;
        }
        if st.nav_until > now {
            self.stats.nav_violations += 1;
        }
        let Some(head) = st.queue.front_mut() else {
            st.state = TxState::Idle;
            return;
        };
        head.attempts += 1;
        self.stats.max_attempts = self.stats.max_attempts.max(head.attempts);
        let data_bytes = cfg.mac_header_bytes + head.bytes;
        let frame = match head.dst {
            None => Frame {
                kind: FrameKind::Bcast,
                src: node,
                dst: None,
                nav: SimTime::ZERO,
                bytes: data_bytes,
                seq: head.seq,
                payload: Some(head.packet.clone()),
            },
            Some(dst) if cfg.rts_cts && head.bytes > cfg.rts_threshold_bytes => {
                let sifs = cfg.sifs();
                let nav = sifs
                    + cfg.airtime(cfg.cts_bytes)
                    + sifs
                    + cfg.airtime(data_bytes)
                    + sifs
                    + cfg.airtime(cfg.ack_bytes);
                Frame {
                    kind: FrameKind::Rts,
                    src: node,
                    dst: Some(dst),
                    nav,
                    bytes: cfg.rts_bytes,
                    seq: head.seq,
                    payload: None,
                }
            }
            Some(dst) => self.data_frame(node, dst),
        };
        self.nodes[node.index()].state = TxState::Sending;
        if let Some(a) = &mut self.audit {
            a.initiations.push((node, now));
        }
        self.transmit(cx, frame);
    }

    fn data_frame(&self, node: NodeId, dst: NodeId) -> Frame {
        let head = self.nodes[node.index()]
            .queue
            .front()
            .expect("data frame needs a queued packet");
        Frame {
            kind: FrameKind::Data,
            src: node,
            dst: Some(dst),
            nav: self.cfg.sifs() + self.cfg.airtime(self.cfg.ack_bytes),
            bytes: self.cfg.mac_header_bytes + head.bytes,
            seq: head.seq,
            payload: Some(head.packet.clone()),
        }
    }

    fn transmit<E: From<MacEvent>>(&mut self, cx: &mut MacCtx<'_, E>, frame: Frame) {
        let now = cx.sched.now();
        let air = self.cfg.airtime(frame.bytes);
        let end = now + air;
        let src = frame.src;
        self.count(frame.kind);
        let id = self.next_frame;
        self.next_frame += 1;

        let st = &mut self.nodes[src.index()];
        st.tx_until = end;
        for r in st.incoming.iter_mut().filter(|r| r.end > now) {
            r.corrupted = true;
        }
        if let Some(a) = &mut self.audit {
            a.tx.push((src, now, end));
        }
        let mut died = Vec::new();
        if cx.energy.charge(src, EnergyRole::Tx, air, now) == ChargeOutcome::Died {
            died.push(src);
        }

        let mut receivers = Vec::new();
        for r in cx.world.neighbors_of(src, now) {
            if !cx.energy.is_alive(r) {
                continue;
            }
            let rs = &mut self.nodes[r.index()];
            let mut corrupted = rs.tx_until > now;
            for other in rs.incoming.iter_mut().filter(|x| x.end > now) {
                other.corrupted = true;
                corrupted = true;
            }
            rs.incoming.push(Incoming {
                frame: id,
                end,
                corrupted,
            });
            receivers.push(r);
            let role = match frame.dst {
                None => EnergyRole::Rx,
                Some(d) if d == r => EnergyRole::Rx,
                Some(_) => EnergyRole::Overhear,
            };
            if cx.energy.charge(r, role, air, now) == ChargeOutcome::Died {
                died.push(r);
            }
        }
        cx.sched.schedule(end, MacEvent::TxEnd { frame: id }.into());
        self.on_air.insert(
            id,
            OnAir {
                frame,
                start: now,
                receivers: receivers.clone(),
            },
        );
        self.reevaluate(cx, src);
        for r in receivers {
            self.reevaluate(cx, r);
        }
        for node in died {
            self.kill(cx.sched, node);
            self.out.push(MacUpcall::Died { node });
        }
    }

    fn on_tx_end<E: From<MacEvent>>(&mut self, cx: &mut MacCtx<'_, E>, id: u64) {
        let now = cx.sched.now();
        let OnAir {
            frame,
            start,
            receivers,
        } = self.on_air.remove(&id).expect("frame on air");
        for r in receivers {
            let rs = &mut self.nodes[r.index()];
            let pos = rs
                .incoming
                .iter()
                .position(|x| x.frame == id)
                .expect("reception recorded");
            let rec = rs.incoming.swap_remove(pos);
            if !cx.energy.is_alive(r) {
                continue;
            }
            if rec.corrupted {
                self.stats.corrupted_receptions += 1;
                if frame.kind == FrameKind::Data && frame.dst == Some(r) {
                    self.stats.data_collisions += 1;
                    if let Some(a) = &mut self.audit {
                        a.data_collisions.push((r, now));
                    }
                }
            } else {
                if let Some(a) = &mut self.audit {
                    a.rx.push((r, start, now));
                }
                self.decode(cx, r, &frame);
            }
            self.reevaluate(cx, r);
        }

        let src = frame.src;
        if !cx.energy.is_alive(src) {
            return;
        }
        let cfg = &self.cfg;
        let sifs = cfg.sifs();
        let slot = cfg.slot();
        let cts_wait = sifs + cfg.airtime(cfg.cts_bytes) + slot;
        let ack_wait = sifs + cfg.airtime(cfg.ack_bytes) + slot;
        match frame.kind {
            FrameKind::Bcast => {
                let st = &mut self.nodes[src.index()];
                st.queue.pop_front();
                st.state = TxState::Idle;
                self.kick(cx, src);
            }
            FrameKind::Rts => {
                let t = cx
                    .sched
                    .schedule(now + cts_wait, MacEvent::Timeout { node: src }.into());
                let st = &mut self.nodes[src.index()];
                st.state = TxState::WaitCts;
                st.timeout = Some(t);
            }
            FrameKind::Data => {
                let t = cx
                    .sched
                    .schedule(now + ack_wait, MacEvent::Timeout { node: src }.into());
                let st = &mut self.nodes[src.index()];
                st.state = TxState::WaitAck;
                st.timeout = Some(t);
            }
            FrameKind::Cts | FrameKind::Ack => {}
        }
        self.reevaluate(cx, src);
    }

    /// Acts on a successfully decoded frame at receiver `r`.
    fn decode<E: From<MacEvent>>(&mut self, cx: &mut MacCtx<'_, E>, r: NodeId, frame: &Frame) {
        let now = cx.sched.now();
        let sifs = self.cfg.sifs();
        if frame.kind == FrameKind::Bcast {
            let packet = frame.payload.clone().expect("broadcast carries a packet");
            self.emit_receive(r, frame.src, packet);
            return;
        }
        if frame.dst != Some(r) {
            if frame.nav > SimTime::ZERO {
                self.set_nav(cx, r, now + frame.nav);
            }
            return;
        }
        match frame.kind {
            FrameKind::Rts => {
                if self.nodes[r.index()].nav_until <= now {
                    let cts = Frame {
                        kind: FrameKind::Cts,
                        src: r,
                        dst: Some(frame.src),
                        nav: frame.nav - sifs - self.cfg.airtime(self.cfg.cts_bytes),
                        bytes: self.cfg.cts_bytes,
                        seq: frame.seq,
                        payload: None,
                    };
                    cx.sched.schedule(
                        now + sifs,
                        MacEvent::Respond {
                            node: r,
                            frame: cts,
                        }
                        .into(),
                    );
                }
            }
            FrameKind::Cts => {
                let st = &mut self.nodes[r.index()];
                let expected = st.state == TxState::WaitCts
                    && st
                        .queue
                        .front()
                        .is_some_and(|h| h.dst == Some(frame.src) && h.seq == frame.seq);
                if expected {
                    if let Some(t) = st.timeout.take() {
                        cx.sched.cancel(t);
                    }
                    st.state = TxState::Sending;
                    let data = self.data_frame(r, frame.src);
                    cx.sched.schedule(
                        now + sifs,
                        MacEvent::Respond {
                            node: r,
                            frame: data,
                        }
                        .into(),
                    );
                }
            }
            FrameKind::Data => {
                let ack = Frame {
                    kind: FrameKind::Ack,
                    src: r,
                    dst: Some(frame.src),
                    nav: SimTime::ZERO,
                    bytes: self.cfg.ack_bytes,
                    seq: frame.seq,
                    payload: None,
                };
                cx.sched.schedule(
                    now + sifs,
                    MacEvent::Respond {
                        node: r,
                        frame: ack,
                    }
                    .into(),
                );
                let last = self.nodes[r.index()]
                    .last_seq_from
                    .insert(frame.src, frame.seq);
                if last != Some(frame.seq) {
                    let packet = frame.payload.clone().expect("data carries a packet");
                    self.emit_receive(r, frame.src, packet);
                }
            }
            FrameKind::Ack => {
                let st = &mut self.nodes[r.index()];
                let expected = st.state == TxState::WaitAck
                    && st
                        .queue
                        .front()
                        .is_some_and(|h| h.dst == Some(frame.src) && h.seq == frame.seq);
                if expected {
                    if let Some(t) = st.timeout.take() {
                        cx.sched.cancel(t);
                    }
                    let item = st.queue.pop_front().expect("head exists");
                    st.cw = self.cfg.cw_min;
                    st.state = TxState::Idle;
                    self.out.push(MacUpcall::SendDone {
                        node: r,
                        dst: frame.src,
                        packet: item.packet,
                        outcome: SendOutcome::Delivered,
                    });
                    self.kick(cx, r);
                }
            }
            FrameKind::Bcast => unreachable!(),
        }
    }

    fn set_nav<E: From<MacEvent>>(&mut self, cx: &mut MacCtx<'_, E>, node: NodeId, until: SimTime) {
        let now = cx.sched.now();
        let st = &mut self.nodes[node.index()];
        if until <= st.nav_until {
            return;
        }
        st.nav_until = until;
        if let Some(t) = st.nav_timer.take() {
            cx.sched.cancel(t);
        }
        st.nav_timer = Some(cx.sched.schedule(until, MacEvent::NavEnd { node }.into()));
        if let Some(a) = &mut self.audit {
            a.nav.push((node, now, until));
        }
        self.reevaluate(cx, node);
    }

    fn on_respond<E: From<MacEvent>>(
        &mut self,
        cx: &mut MacCtx<'_, E>,
        node: NodeId,
        frame: Frame,
    ) {
        let now = cx.sched.now();
        if !cx.energy.is_alive(node) || self.nodes[node.index()].tx_until > now {
            return;
        }
        match frame.kind {
            // A CTS is withheld unless the receiver senses a clear channel, so
            // that a hidden sender's RTS overlapping the SIFS gap cannot lead
            // to an unprotected DATA frame.
            FrameKind::Cts if !self.medium_idle(node, now) => {
                self.stats.cts_suppressed += 1;
            }
            FrameKind::Data if self.nodes[node.index()].state != TxState::Sending => {}
            _ => self.transmit(cx, frame),
        }
    }

    fn on_timeout<E: From<MacEvent>>(&mut self, cx: &mut MacCtx<'_, E>, node: NodeId) {
        let limit = self.cfg.retry_limit;
        let cw_max = self.cfg.cw_max;
        let cw_min = self.cfg.cw_min;
        let st = &mut self.nodes[node.index()];
        st.timeout = None;
        let outcome = match st.state {
            TxState::WaitCts => SendOutcome::NoCts,
            TxState::WaitAck => SendOutcome::NoAck,
            _ => return,
        };
        let head = st.queue.front().expect("waiting implies a head");
        if head.attempts > limit {
            let item = st.queue.pop_front().expect("head exists");
            st.cw = cw_min;
            st.state = TxState::Idle;
            self.stats.failures += 1;
            self.out.push(MacUpcall::SendDone {
                node,
                dst: item.dst.expect("only unicast waits"),
                packet: item.packet,
                outcome,
            });
            self.kick(cx, node);
        } else {
            st.cw = (2 * st.cw + 1).min(cw_max);
            st.residual = st.rng.gen_range(0..=st.cw) as u64;
            st.state = TxState::Contend;
            self.reevaluate(cx, node);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::EnergyConfig;
    use crate::fixture::Fixture;
    use crate::packet::{RreqId, RreqQuery};
    use crate::world::Arena;

    struct Bench {
        sched: Scheduler<MacEvent>,
        world: World,
        energy: Energy,
        mac: Mac,
        ups: Vec<(SimTime, MacUpcall)>,
    }

    impl Bench {
        fn new(edges: &str, cfg: MacConfig) -> Self {
            let fx = Fixture::parse(edges).unwrap();
            let world = World::from_fixture(Arena::default(), &fx);
            let n = world.node_count();
            let mut mac = Mac::new(cfg, n, &RngStreams::new(3));
            mac.enable_audit();
            Self {
                sched: Scheduler::new(),
                world,
                energy: Energy::new(EnergyConfig::default(), n, true),
                mac,
                ups: Vec::new(),
            }
        }

        fn id(&self, name: &str) -> NodeId {
            self.world.lookup(name).unwrap()
        }

        fn cx(&mut self) -> (MacCtx<'_, MacEvent>, &mut Mac) {
            (
                MacCtx {
                    sched: &mut self.sched,
                    world: &mut self.world,
                    energy: &mut self.energy,
                },
                &mut self.mac,
            )
        }

        fn unicast(&mut self, a: &str, b: &str, bytes: u32) {
            let (a, b) = (self.id(a), self.id(b));
            let (mut cx, mac) = self.cx();
            mac.send_unicast(&mut cx, a, b, pkt(), bytes).unwrap();
        }

        fn broadcast(&mut self, a: &str) {
            let a = self.id(a);
            let (mut cx, mac) = self.cx();
            mac.send_broadcast(&mut cx, a, pkt(), 24).unwrap();
        }

        fn run(&mut self, until: SimTime) {
            while let Some(ev) = self.sched.pop_until(until) {
                let now = self.sched.now();
                let (mut cx, mac) = self.cx();
                mac.handle(&mut cx, ev.action);
                for u in self.mac.drain() {
                    self.ups.push((now, u));
                }
            }
        }

        fn received(&self, node: &str) -> usize {
            let n = self.id(node);
            self.ups
                .iter()
                .filter(|(_, u)| matches!(u, MacUpcall::Receive { node, .. } if *node == n))
                .count()
        }

        fn outcomes(&self) -> Vec<SendOutcome> {
            self.ups
                .iter()
                .filter_map(|(_, u)| match u {
                    MacUpcall::SendDone { outcome, .. } => Some(*outcome),
                    _ => None,
                })
                .collect()
        }
    }

    fn pkt() -> Packet {
        Packet::Query(RreqQuery {
            id: RreqId {
                origin: NodeId(0),
                seq: 0,
            },
            phase: 0,
            predecessor: NodeId(0),
        })
    }

    fn frames(mac: &Mac, k: FrameKind) -> u64 {
        mac.stats().frames.get(&k).copied().unwrap_or(0)
    }

    #[test]
    fn uncontended_exchange_uses_four_frames() {
        let mut b = Bench::new("A B\n", MacConfig::default());
        b.unicast("A", "B", 540);
        b.run(SimTime::from_secs(1));
        assert_eq!(b.outcomes(), vec![SendOutcome::Delivered]);
        assert_eq!(b.received("B"), 1);
        let total: u64 = b.mac.stats().frames.values().sum();
        assert_eq!(total, 4);
        for k in [
            FrameKind::Rts,
            FrameKind::Cts,
            FrameKind::Data,
            FrameKind::Ack,
        ] {
            assert_eq!(frames(&b.mac, k), 1, "{k:?}");
        }
    }

    #[test]
    fn small_unicast_skips_rts() {
        let mut b = Bench::new("A B\n", MacConfig::default());
        b.unicast("A", "B", 36);
        b.run(SimTime::from_secs(1));
        assert_eq!(b.outcomes(), vec![SendOutcome::Delivered]);
        assert_eq!(frames(&b.mac, FrameKind::Rts), 0);
        assert_eq!(frames(&b.mac, FrameKind::Data), 1);
        assert_eq!(frames(&b.mac, FrameKind::Ack), 1);
    }

    #[test]
    fn broadcast_reaches_all_idle_neighbors() {
        let mut b = Bench::new("S A\nS B\nS C\n", MacConfig::default());
        b.broadcast("S");
        b.run(SimTime::from_secs(1));
        for n in ["A", "B", "C"] {
            assert_eq!(b.received(n), 1, "{n}");
        }
        assert_eq!(b.received("S"), 0);
    }

    #[test]
    fn overlapping_broadcasts_collide_at_common_receiver() {
        let cfg = MacConfig {
            broadcast_jitter_us: 0,
            cw_min: 0,
            ..MacConfig::default()
        };
        let mut b = Bench::new("A B\nB C\n", cfg);
        b.broadcast("A");
        b.broadcast("C");
        b.run(SimTime::from_secs(1));
        assert_eq!(b.received("B"), 0);
        assert_eq!(b.mac.stats().corrupted_receptions, 2);
    }

    #[test]
    fn transmitting_node_does_not_receive() {
        let cfg = MacConfig {
            broadcast_jitter_us: 0,
            cw_min: 0,
            ..MacConfig::default()
        };
        // A and B start at the same instant, each deaf to the other.
        let mut b = Bench::new("A B\n", cfg);
        b.broadcast("A");
        b.broadcast("B");
        b.run(SimTime::from_secs(1));
        assert_eq!(b.received("A"), 0);
        assert_eq!(b.received("B"), 0);
    }

    #[test]
    fn overheard_unicast_is_not_delivered_upward() {
        let mut b = Bench::new("A B\nA C\n", MacConfig::default());
        b.unicast("A", "B", 36);
        b.run(SimTime::from_secs(1));
        assert_eq!(b.received("B"), 1);
        assert_eq!(b.received("C"), 0);
        // C still paid for listening.
        assert!(b.energy.consumed()[b.id("C").index()] > 0.0);
    }

    #[test]
    fn unreachable_receiver_fails_after_retry_limit() {
        let mut b = Bench::new("A B\nC\n", MacConfig::default());
        b.unicast("A", "C", 540);
        b.run(SimTime::from_secs(5));
        assert_eq!(b.outcomes(), vec![SendOutcome::NoCts]);
        let limit = MacConfig::default().retry_limit;
        assert_eq!(frames(&b.mac, FrameKind::Rts), (limit + 1) as u64);
        assert_eq!(b.mac.stats().max_attempts, limit + 1);
    }

    #[test]
    fn rts_neighbors_defer_by_nav() {
        let mut b = Bench::new("A B\nA C\n", MacConfig::default());
        b.unicast("A", "B", 540);
        b.run(SimTime::from_secs(1));
        let c = b.id("C");
        let audit = b.mac.audit().unwrap();
        assert!(audit.nav.iter().any(|&(n, _, _)| n == c));
        assert_eq!(b.mac.stats().nav_violations, 0);
    }

    #[test]
    fn ideal_channel_delivers_after_link_latency() {
        let cfg = MacConfig {
            ideal_channel: true,
            ..MacConfig::default()
        };
        let mut b = Bench::new("A B\nlatency A B 4000\nA C\n", cfg);
        b.broadcast("A");
        b.run(SimTime::from_secs(1));
        let times: Vec<_> = b.ups.iter().map(|(t, _)| *t).collect();
        assert_eq!(times, vec![SimTime(1000), SimTime(4000)]);
    }
}
