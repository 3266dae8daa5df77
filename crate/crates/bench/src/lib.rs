//! Workloads shared by the benchmarks.

use zdsim_core::config::Protocol;
use zdsim_core::scenarios;
use zdsim_core::{RunConfig, Scheduler, SimTime};

pub use zdsim_core::scenarios::{oracle_graph, worked_example_discovery};

/// The mobile scenario shortened to `horizon_s` seconds.
pub fn short_mobile(protocol: Protocol, seed: u64, horizon_s: f64) -> RunConfig {
    let mut cfg = scenarios::mobile_config(protocol, seed);
    cfg.run.horizon_s = horizon_s;
    cfg
}

/// Schedules `n` events at pseudo-random times, each of which schedules a
/// follow-up until `n` have run. Returns the number executed.
pub fn scheduler_churn(n: u64) -> u64 {
    let mut s: Scheduler<u64> = Scheduler::new();
    for i in 0..1024 {
        s.schedule(SimTime(i * 7919 % 100_000), i);
    }
    let mut left = n;
    s.run_until(SimTime(u64::MAX), |sched, ev| {
        if left > 0 {
            left -= 1;
            sched.schedule_in(SimTime(ev.action * 31 % 5000 + 1), ev.action + 1);
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn churn_runs_every_event() {
        assert_eq!(scheduler_churn(1000), 1024 + 1000);
    }
}
