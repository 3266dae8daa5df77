//! Routing-layer packets and their simulated wire sizes.

use std::fmt;

use serde::Serialize;

use crate::config::PacketSizes;
use crate::engine::SimTime;
use crate::world::NodeId;

/// Identifies one flood: all copies of a route request share it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct RreqId {
    pub origin: NodeId,
    pub seq: u32,
}

impl fmt::Display for RreqId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.origin, self.seq)
    }
}

/// Distinguishes the paths discovered by one flood. The destination accepts at
/// most one copy per (first hop, last hop) pair.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct PathKey {
    pub seq: u32,
    pub first_hop: NodeId,
    pub last_hop: NodeId,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rreq {
    pub id: RreqId,
    pub src: NodeId,
    pub dst: NodeId,
    pub active_neighbor_count: u32,
    /// Nodes that rebroadcast this copy, in order. The origin is not listed.
    pub traversed: Vec<NodeId>,
}

impl Rreq {
    pub fn hop_count(&self) -> usize {
        self.traversed.len()
    }

    /// Founder of this copy's path, once some neighbor of the origin has
    /// rebroadcast it.
    pub fn first_hop(&self) -> Option<NodeId> {
        self.traversed.first().copied()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rrep {
    pub for_rreq: RreqId,
    pub path_key: PathKey,
    pub active_neighbor_count: u32,
    /// Full path `[src, .., dst]` taken by the answered copy.
    pub route: Vec<NodeId>,
    /// Index in `route` of the node currently holding the reply.
    pub cursor: usize,
}

impl Rrep {
    pub fn hop_count(&self) -> usize {
        self.route.len() - 1
    }

    pub fn src(&self) -> NodeId {
        self.route[0]
    }

    pub fn dst(&self) -> NodeId {
        *self.route.last().expect("route is never empty")
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RreqQuery {
    pub id: RreqId,
    /// Query phase at the querier (one per accepted copy).
    pub phase: u32,
    /// Node the querier received the queried copy from.
    pub predecessor: NodeId,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RreqQueryReply {
    pub id: RreqId,
    pub phase: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Rerr {
    pub src: NodeId,
    pub dst: NodeId,
    pub path_key: PathKey,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DataPacket {
    pub flow: u32,
    pub seq: u64,
    pub src: NodeId,
    pub dst: NodeId,
    pub path_key: PathKey,
    pub created: SimTime,
    pub payload_bytes: u32,
    /// Nodes visited so far, starting with the source.
    pub hops: Vec<NodeId>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub enum Packet {
    Rreq(Rreq),
    Rrep(Rrep),
    Query(RreqQuery),
    QueryReply(RreqQueryReply),
    Rerr(Rerr),
    Data(DataPacket),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PacketKind {
    Rreq,
    Rrep,
    Query,
    QueryReply,
    Rerr,
    Data,
}

impl PacketKind {
    pub const CONTROL: [PacketKind; 5] = [
        PacketKind::Rreq,
        PacketKind::Rrep,
        PacketKind::Query,
        PacketKind::QueryReply,
        PacketKind::Rerr,
    ];
}

impl Packet {
    pub fn kind(&self) -> PacketKind {
        match self {
            Packet::Rreq(_) => PacketKind::Rreq,
            Packet::Rrep(_) => PacketKind::Rrep,
            Packet::Query(_) => PacketKind::Query,
            Packet::QueryReply(_) => PacketKind::QueryReply,
            Packet::Rerr(_) => PacketKind::Rerr,
            Packet::Data(_) => PacketKind::Data,
        }
    }

    pub fn is_control(&self) -> bool {
        !matches!(self, Packet::Data(_))
    }

    pub fn bytes(&self, sizes: &PacketSizes) -> u32 {
        match self {
            Packet::Rreq(r) => sizes.rreq_base + sizes.rreq_per_hop * r.traversed.len() as u32,
            Packet::Rrep(_) => sizes.rrep,
            Packet::Query(_) => sizes.query,
            Packet::QueryReply(_) => sizes.query_reply,
            Packet::Rerr(_) => sizes.rerr,
            Packet::Data(d) => sizes.data_header + d.payload_bytes,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_sizes() {
        let sizes = PacketSizes::default();
        let id = RreqId {
            origin: NodeId(0),
            seq: 1,
        };
        let rreq = Packet::Rreq(Rreq {
            id,
            src: NodeId(0),
            dst: NodeId(3),
            active_neighbor_count: 0,
            traversed: vec![NodeId(1), NodeId(2)],
        });
        assert_eq!(rreq.bytes(&sizes), 52);
        let q = Packet::Query(RreqQuery {
            id,
            phase: 0,
            predecessor: NodeId(0),
        });
        assert_eq!(q.bytes(&sizes), 24);
        assert!(q.is_control());
        let key = PathKey {
            seq: 1,
            first_hop: NodeId(1),
            last_hop: NodeId(2),
        };
        let data = Packet::Data(DataPacket {
            flow: 0,
            seq: 0,
            src: NodeId(0),
            dst: NodeId(3),
            path_key: key,
            created: SimTime::ZERO,
            payload_bytes: 512,
            hops: vec![NodeId(0)],
        });
        assert_eq!(data.bytes(&sizes), 540);
        assert!(!data.is_control());
    }
}
