//! Constant-bit-rate sources.

use serde::Serialize;

use crate::engine::SimTime;
use crate::world::NodeId;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CbrFlow {
    pub id: u32,
    pub src: NodeId,
    pub dst: NodeId,
    pub packet_bytes: u32,
    pub rate_bps: f64,
    pub start: SimTime,
    /// Exclusive; `None` runs to the horizon.
    pub stop: Option<SimTime>,
}

impl CbrFlow {
    /// Time between consecutive packets, `size * 8 / rate`.
    pub fn interval(&self) -> SimTime {
        SimTime::from_secs_f64(self.packet_bytes as f64 * 8.0 / self.rate_bps).max(SimTime(1))
    }

    /// Emission time of packet `seq`, or `None` once the flow has stopped.
    pub fn emission(&self, seq: u64) -> Option<SimTime> {
        let t = SimTime(self.start.0 + seq * self.interval().0);
        match self.stop {
            Some(stop) if t >= stop => None,
            _ => Some(t),
        }
    }

    /// Packets emitted in `[start, until)`.
    pub fn offered_before(&self, until: SimTime) -> u64 {
        let end = self.stop.map_or(until, |s| s.min(until));
        if end <= self.start {
            return 0;
        }
        (end.0 - self.start.0).div_ceil(self.interval().0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flow() -> CbrFlow {
        CbrFlow {
            id: 0,
            src: NodeId(0),
            dst: NodeId(1),
            packet_bytes: 512,
            rate_bps: 40_960.0,
            start: SimTime::from_secs(1),
            stop: Some(SimTime::from_secs(2)),
        }
    }

    #[test]
    fn interval_is_size_over_rate() {
        assert_eq!(flow().interval(), SimTime::from_millis(100));
    }

    #[test]
    fn emissions_stop_at_stop_time() {
        let f = flow();
        assert_eq!(f.emission(0), Some(SimTime::from_secs(1)));
        assert_eq!(f.emission(9), Some(SimTime::from_millis(1900)));
        assert_eq!(f.emission(10), None);
        assert_eq!(f.offered_before(SimTime::from_secs(5)), 10);
        assert_eq!(f.offered_before(SimTime::from_millis(1050)), 1);
        assert_eq!(f.offered_before(SimTime::from_millis(500)), 0);
    }
}
