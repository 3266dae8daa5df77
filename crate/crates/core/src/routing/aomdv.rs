//! Baseline multipath discovery: accepted copies are rebroadcast at once and
//! the source ranks paths by length alone.

use std::cmp::Ordering;

use crate::engine::SimTime;
use crate::packet::Rreq;
use crate::world::NodeId;

use super::{Candidate, Router};

/// Ascending hop count, then arrival.
pub fn rank(a: &Candidate, b: &Candidate) -> Ordering {
    (a.hops, a.arrival).cmp(&(b.hops, b.arrival))
}

pub(super) fn rebroadcast(router: &mut Router, now: SimTime, node: NodeId, rreq: Rreq) {
    router.rebroadcast(now, node, rreq, 0);
}
