//! Per-event protocol trace.
//!
//! One line per event: `<time_us> <node> <kind> <key=value ...>`, with node
//! ids replaced by fixture names where the topology has them. The format is
//! stable so that a trace can be diffed between runs.

use std::fmt::Write as _;

use crate::engine::SimTime;
use crate::packet::RreqId;
use crate::routing::DropReason;
use crate::world::NodeId;

#[derive(Clone, Debug, PartialEq)]
pub enum TraceEvent {
    RreqOriginate {
        id: RreqId,
        dst: NodeId,
    },
    RreqRecv {
        id: RreqId,
        from: NodeId,
        anc: u32,
        hops: usize,
        accepted: bool,
    },
    QuerySend {
        id: RreqId,
        phase: u32,
    },
    QueryAnswer {
        id: RreqId,
        to: NodeId,
        counted: bool,
    },
    QueryReplyRecv {
        id: RreqId,
        from: NodeId,
        counted: bool,
    },
    RreqRebroadcast {
        id: RreqId,
        anc: u32,
        hops: usize,
    },
    RrepSend {
        id: RreqId,
        anc: u32,
        to: NodeId,
    },
    RrepForward {
        id: RreqId,
        before: u32,
        after: u32,
        to: NodeId,
    },
    RrepDrop {
        id: RreqId,
    },
    RrepArrive {
        id: RreqId,
        route: Vec<NodeId>,
        anc: u32,
    },
    RrepIgnored {
        id: RreqId,
    },
    PathsSelected {
        dst: NodeId,
        paths: Vec<(Vec<NodeId>, u32)>,
    },
    DiscoveryFailed {
        dst: NodeId,
    },
    PathLost {
        dst: NodeId,
        remaining: usize,
    },
    RerrSend {
        to: NodeId,
    },
    DataDeliver {
        flow: u32,
        seq: u64,
        delay: SimTime,
    },
    DataDrop {
        flow: u32,
        seq: u64,
        reason: DropReason,
    },
    NodeDead,
}

impl TraceEvent {
    pub fn kind(&self) -> &'static str {
        match self {
            TraceEvent::RreqOriginate { .. } => "rreq_originate",
            TraceEvent::RreqRecv { .. } => "rreq_recv",
            TraceEvent::QuerySend { .. } => "query_send",
            TraceEvent::QueryAnswer { .. } => "query_answer",
            TraceEvent::QueryReplyRecv { .. } => "query_reply_recv",
            TraceEvent::RreqRebroadcast { .. } => "rreq_rebroadcast",
            TraceEvent::RrepSend { .. } => "rrep_send",
            TraceEvent::RrepForward { .. } => "rrep_forward",
            TraceEvent::RrepDrop { .. } => "rrep_drop",
            TraceEvent::RrepArrive { .. } => "rrep_arrive",
            TraceEvent::RrepIgnored { .. } => "rrep_ignored",
            TraceEvent::PathsSelected { .. } => "paths_selected",
            TraceEvent::DiscoveryFailed { .. } => "discovery_failed",
            TraceEvent::PathLost { .. } => "path_lost",
            TraceEvent::RerrSend { .. } => "rerr_send",
            TraceEvent::DataDeliver { .. } => "data_deliver",
            TraceEvent::DataDrop { .. } => "data_drop",
            TraceEvent::NodeDead => "node_dead",
        }
    }
}

/// A trace record with the simulation time it happened at.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceRecord {
    pub at: SimTime,
    pub node: NodeId,
    pub event: TraceEvent,
}

fn path(names: &[String], route: &[NodeId]) -> String {
    route
        .iter()
        .map(|n| names[n.index()].as_str())
        .collect::<Vec<_>>()
        .join("-")
}

impl TraceRecord {
    pub fn format(&self, names: &[String]) -> String {
        let n = |id: NodeId| names[id.index()].as_str();
        let rid = |id: RreqId| format!("{}#{}", n(id.origin), id.seq);
        let mut line = format!(
            "{} {} {}",
            self.at.as_micros(),
            n(self.node),
            self.event.kind()
        );
        let w = &mut line;
        let _ = match &self.event {
            TraceEvent::RreqOriginate { id, dst } => write!(w, " id={} dst={}", rid(*id), n(*dst)),
            TraceEvent::RreqRecv {
                id,
                from,
                anc,
                hops,
                accepted,
            } => write!(
                w,
                " id={} from={} anc={anc} hops={hops} accepted={accepted}",
                rid(*id),
                n(*from)
            ),
            TraceEvent::QuerySend { id, phase } => write!(w, " id={} phase={phase}", rid(*id)),
            TraceEvent::QueryAnswer { id, to, counted } => {
                write!(w, " id={} to={} counted={counted}", rid(*id), n(*to))
            }
            TraceEvent::QueryReplyRecv { id, from, counted } => {
                write!(w, " id={} from={} counted={counted}", rid(*id), n(*from))
            }
            TraceEvent::RreqRebroadcast { id, anc, hops } => {
                write!(w, " id={} anc={anc} hops={hops}", rid(*id))
            }
            TraceEvent::RrepSend { id, anc, to } => {
                write!(w, " id={} anc={anc} to={}", rid(*id), n(*to))
            }
            TraceEvent::RrepForward {
                id,
                before,
                after,
                to,
            } => {
                write!(w, " id={} anc={before}->{after} to={}", rid(*id), n(*to))
            }
            TraceEvent::RrepDrop { id } | TraceEvent::RrepIgnored { id } => {
                write!(w, " id={}", rid(*id))
            }
            TraceEvent::RrepArrive { id, route, anc } => {
                write!(w, " id={} path={} anc={anc}", rid(*id), path(names, route))
            }
            TraceEvent::PathsSelected { dst, paths } => {
                let list: Vec<String> = paths
                    .iter()
                    .map(|(r, a)| format!("{}:{a}", path(names, r)))
                    .collect();
                write!(w, " dst={} paths={}", n(*dst), list.join(","))
            }
            TraceEvent::DiscoveryFailed { dst } => write!(w, " dst={}", n(*dst)),
            TraceEvent::PathLost { dst, remaining } => {
                write!(w, " dst={} remaining={remaining}", n(*dst))
            }
            TraceEvent::RerrSend { to } => write!(w, " to={}", n(*to)),
            TraceEvent::DataDeliver { flow, seq, delay } => {
                write!(w, " flow={flow} seq={seq} delay_us={}", delay.as_micros())
            }
            TraceEvent::DataDrop { flow, seq, reason } => {
                write!(w, " flow={flow} seq={seq} reason={reason:?}")
            }
            TraceEvent::NodeDead => Ok(()),
        };
        line
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formats_with_names() {
        let names: Vec<String> = ["S", "B", "D"].iter().map(|s| s.to_string()).collect();
        let id = RreqId {
            origin: NodeId(0),
            seq: 1,
        };
        let rec = TraceRecord {
            at: SimTime(12_000),
            node: NodeId(1),
            event: TraceEvent::RrepForward {
                id,
                before: 2,
                after: 4,
                to: NodeId(0),
            },
        };
        assert_eq!(
            rec.format(&names),
            "12000 B rrep_forward id=S#1 anc=2->4 to=S"
        );
        let sel = TraceRecord {
            at: SimTime(1),
            node: NodeId(0),
            event: TraceEvent::PathsSelected {
                dst: NodeId(2),
                paths: vec![(vec![NodeId(0), NodeId(1), NodeId(2)], 4)],
            },
        };
        assert_eq!(sel.format(&names), "1 S paths_selected dst=D paths=S-B-D:4");
    }
}
