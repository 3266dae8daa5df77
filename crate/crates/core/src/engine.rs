//! Discrete-event scheduler and seeded random streams.
//!
//! Events are ordered by `(fire_at, seq)`, where `seq` is assigned at
//! insertion. Nothing else (node id, payload, map iteration order) takes part
//! in ordering, so a run is a pure function of its configuration and seed.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::fmt;
use std::ops::{Add, Sub};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Simulated time in integer microseconds.
#[derive(
    Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize,
)]
#[serde(transparent)]
pub struct SimTime(pub u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);
    pub const MAX: SimTime = SimTime(u64::MAX);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * 1_000)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1_000_000)
    }

    /// Rounds to the nearest microsecond; negative and NaN inputs clamp to zero.
    pub fn from_secs_f64(s: f64) -> Self {
        if s.is_nan() || s <= 0.0 {
            SimTime(0)
        } else {
            SimTime((s * 1e6).round() as u64)
        }
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1e6
    }

    pub fn saturating_sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(rhs.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}", self.0 / 1_000_000, self.0 % 1_000_000)
    }
}

/// Handle returned by [`Scheduler::schedule`]; lets the caller cancel the event.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Ticket(u64);

/// A popped event.
#[derive(Debug)]
pub struct Event<E> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub action: E,
}

/// Priority queue of pending events plus the simulation clock.
pub struct Scheduler<E> {
    now: SimTime,
    next_seq: u64,
    heap: BinaryHeap<Reverse<(SimTime, u64)>>,
    pending: HashMap<u64, E>,
    executed: u64,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Self {
            now: SimTime::ZERO,
            next_seq: 0,
            heap: BinaryHeap::new(),
            pending: HashMap::new(),
            executed: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    /// Number of events still queued (cancelled ones excluded).
    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    /// Total events executed since construction.
    pub fn executed(&self) -> u64 {
        self.executed
    }

    /// Queues `action` at `fire_at`.
    ///
    /// Panics with a "past event" diagnostic if `fire_at` precedes the clock:
    /// that is always a bug in the caller and the run cannot continue.
    pub fn schedule(&mut self, fire_at: SimTime, action: E) -> Ticket {
        assert!(
            fire_at >= self.now,
            "past event: scheduled at {} while clock is {}",
            fire_at,
            self.now
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse((fire_at, seq)));
        self.pending.insert(seq, action);
        Ticket(seq)
    }

    pub fn schedule_in(&mut self, delay: SimTime, action: E) -> Ticket {
        let at = self.now + delay;
        self.schedule(at, action)
    }

    /// Returns true iff the event was still pending and has now been removed.
    pub fn cancel(&mut self, ticket: Ticket) -> bool {
        self.pending.remove(&ticket.0).is_some()
    }

    pub fn is_pending(&self, ticket: Ticket) -> bool {
        self.pending.contains_key(&ticket.0)
    }

    /// Pops the next event with `fire_at <= limit`, advancing the clock to it.
    pub fn pop_until(&mut self, limit: SimTime) -> Option<Event<E>> {
        while let Some(&Reverse((at, seq))) = self.heap.peek() {
            if at > limit {
                return None;
            }
            self.heap.pop();
            if let Some(action) = self.pending.remove(&seq) {
                self.now = at;
                self.executed += 1;
                return Some(Event {
                    fire_at: at,
                    seq,
                    action,
                });
            }
        }
        None
    }

    /// Moves the clock forward without executing anything.
    pub fn advance_to(&mut self, t: SimTime) {
        assert!(t >= self.now, "clock cannot move backwards");
        self.now = t;
    }

    /// Executes every event with `fire_at <= limit` in `(fire_at, seq)` order and
    /// leaves the clock at `limit`. The handler may schedule further events,
    /// including at the current instant; those fire within the same call.
    pub fn run_until<F>(&mut self, limit: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Scheduler<E>, Event<E>),
    {
        assert!(limit >= self.now, "run_until limit precedes clock");
        let mut count = 0;
        while let Some(ev) = self.pop_until(limit) {
            handler(self, ev);
            count += 1;
        }
        self.now = limit;
        count
    }
}

/// Independent random sub-streams derived from one run seed.
///
/// Each `(purpose, index)` pair gets its own ChaCha8 stream, so adding draws in
/// one layer never shifts the sequence seen by another.
#[derive(Clone, Copy, Debug)]
pub struct RngStreams {
    seed: u64,
}

/// What a stream is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StreamPurpose {
    Mobility,
    Mac,
    Traffic,
    Latency,
    Topology,
}

impl StreamPurpose {
    fn tag(self) -> u64 {
        match self {
            StreamPurpose::Mobility => 0x6d6f_6269,
            StreamPurpose::Mac => 0x6d61_6321,
            StreamPurpose::Traffic => 0x7472_6166,
            StreamPurpose::Latency => 0x6c61_7465,
            StreamPurpose::Topology => 0x746f_706f,
        }
    }
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, purpose: StreamPurpose, index: u64) -> ChaCha8Rng {
        let mixed = splitmix64(splitmix64(self.seed ^ purpose.tag()) ^ index);
        ChaCha8Rng::seed_from_u64(mixed)
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn drain(s: &mut Scheduler<&'static str>) -> Vec<&'static str> {
        let mut out = Vec::new();
        s.run_until(SimTime::MAX, |_, ev| out.push(ev.action));
        out
    }

    #[test]
    fn pops_in_time_order() {
        let mut s = Scheduler::new();
        s.schedule(SimTime(5), "t5");
        s.schedule(SimTime(3), "t3");
        assert_eq!(drain(&mut s), vec!["t3", "t5"]);
    }

    #[test]
    fn fifo_among_equal_times() {
        let mut s = Scheduler::new();
        s.schedule(SimTime(7), "A");
        s.schedule(SimTime(7), "B");
        assert_eq!(drain(&mut s), vec!["A", "B"]);
    }

    #[test]
    #[should_panic(expected = "past event")]
    fn scheduling_in_the_past_aborts() {
        let mut s = Scheduler::new();
        s.advance_to(SimTime(10));
        s.schedule(SimTime(9), "late");
    }

    #[test]
    fn empty_queue_advances_clock() {
        let mut s: Scheduler<()> = Scheduler::new();
        assert_eq!(s.run_until(SimTime(10), |_, _| {}), 0);
        assert_eq!(s.now(), SimTime(10));
    }

    #[test]
    fn events_beyond_limit_stay_queued() {
        let mut s = Scheduler::new();
        for t in [1, 2, 3, 20] {
            s.schedule(SimTime(t), t);
        }
        assert_eq!(s.run_until(SimTime(10), |_, _| {}), 3);
        assert_eq!(s.len(), 1);
        assert_eq!(s.now(), SimTime(10));
    }

    #[test]
    fn same_instant_chain_fires_in_one_call() {
        let mut s = Scheduler::new();
        s.schedule(SimTime(4), 0u32);
        let mut seen = Vec::new();
        let n = s.run_until(SimTime(4), |sched, ev| {
            seen.push((ev.fire_at, ev.action));
            if ev.action == 0 {
                sched.schedule(sched.now(), 1);
            }
        });
        assert_eq!(n, 2);
        assert_eq!(seen, vec![(SimTime(4), 0), (SimTime(4), 1)]);
    }

    #[test]
    fn cancel_semantics() {
        let mut s = Scheduler::new();
        let a = s.schedule(SimTime(1), "a");
        let b = s.schedule(SimTime(2), "b");
        assert!(s.cancel(a));
        assert!(!s.cancel(a), "double cancel");
        assert_eq!(drain(&mut s), vec!["b"]);
        assert!(!s.cancel(b), "cancel after fire");
    }

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let r = RngStreams::new(42);
        let draw = |p, i| {
            let mut g = r.stream(p, i);
            (0..4).map(|_| g.gen::<u32>()).collect::<Vec<_>>()
        };
        let a = draw(StreamPurpose::Mobility, 3);
        let b = draw(StreamPurpose::Mobility, 3);
        let c = draw(StreamPurpose::Mac, 3);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn display_is_seconds() {
        assert_eq!(SimTime::from_millis(1500).to_string(), "1.500000");
    }
}
