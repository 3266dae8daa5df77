//! Zone-disjoint discovery: the query phase and count-based ranking.
//!
//! Before rebroadcasting an accepted copy, a node asks its neighbours whether
//! they already hold the flood and adds one to the copy's counter per positive
//! answer, ignoring its own predecessor. After rebroadcasting, the node keeps
//! counting the neighbours that query it (`after_anc`) and adds that count to
//! every RREP it forwards for the flood. The source prefers paths with the
//! smallest total.

use std::cmp::Ordering;

use crate::config::Protocol;
use crate::engine::SimTime;
use crate::packet::{Packet, Rreq, RreqId, RreqQuery, RreqQueryReply};
use crate::trace::TraceEvent;
use crate::world::NodeId;

use super::{Candidate, QueryPhase, Router, RouterTimer};

/// Ascending count, then hop count, then arrival.
pub fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    (a.anc, a.hops, a.arrival).cmp(&(b.anc, b.hops, b.arrival))
}

impl Router {
    pub(super) fn start_query_phase(
        &mut self,
        now: SimTime,
        node: NodeId,
        from: NodeId,
        rreq: Rreq,
        phase: u32,
    ) {
        let id = rreq.id;
        self.nodes[node.index()].phases.insert(
            (id, phase),
            QueryPhase {
                rreq,
                predecessor: from,
                replies: 0,
                open: true,
            },
        );
        self.emit(now, node, TraceEvent::QuerySend { id, phase });
        self.broadcast(
            node,
            Packet::Query(RreqQuery {
                id,
                phase,
                predecessor: from,
            }),
        );
        self.timer(
            now + self.cfg.query_timer(),
            RouterTimer::Query { node, id, phase },
        );
    }

    pub(super) fn on_query(&mut self, now: SimTime, node: NodeId, querier: NodeId, q: RreqQuery) {
        if self.protocol != Protocol::ZdAomdv {
            return;
        }
        let st = &mut self.nodes[node.index()];
        if st.query_seen.contains(&(querier, q.id)) {
            return;
        }
        let Some(entry) = st.seen.get_mut(&q.id) else {
            // Never saw the flood: stay silent and leave no trace, so a later
            // query from the same node is still answered.
            return;
        };
        st.query_seen.insert((querier, q.id));
        entry.queried_by.insert(querier);
        let counted = entry.rebroadcast_done && q.predecessor != node;
        if counted {
            entry.after_anc += 1;
        }
        self.emit(
            now,
            node,
            TraceEvent::QueryAnswer {
                id: q.id,
                to: querier,
                counted,
            },
        );
        self.unicast(
            node,
            querier,
            Packet::QueryReply(RreqQueryReply {
                id: q.id,
                phase: q.phase,
            }),
        );
    }

    pub(super) fn on_query_reply(
        &mut self,
        now: SimTime,
        node: NodeId,
        from: NodeId,
        r: RreqQueryReply,
    ) {
        let Some(p) = self.nodes[node.index()].phases.get_mut(&(r.id, r.phase)) else {
            return;
        };
        if !p.open {
            self.stats.late_replies += 1;
            return;
        }
        let counted = from != p.predecessor;
        if counted {
            p.replies += 1;
        }
        self.emit(
            now,
            node,
            TraceEvent::QueryReplyRecv {
                id: r.id,
                from,
                counted,
            },
        );
    }

    pub(super) fn on_query_timer(&mut self, now: SimTime, node: NodeId, id: RreqId, phase: u32) {
        let Some(p) = self.nodes[node.index()].phases.get_mut(&(id, phase)) else {
            return;
        };
        if !p.open {
            return;
        }
        p.open = false;
        let rreq = p.rreq.clone();
        let replies = p.replies;
        self.rebroadcast(now, node, rreq, replies);
    }
}
