//! Checks of the properties every run must satisfy, evaluated after the
//! fact from a finished [`Simulation`]. Each returns a description of the
//! first violation found.

use std::collections::HashSet;

use crate::config::Protocol;
use crate::metrics::MetricsReport;
use crate::sim::Simulation;
use crate::world::NodeId;

pub type Check = Result<(), String>;

/// No delivered packet visited a node twice, and every hop list runs from
/// source to destination. Needs the delivery log.
pub fn loop_freedom(sim: &Simulation) -> Check {
    for d in sim.delivery_log() {
        let distinct: HashSet<_> = d.hops.iter().collect();
        if distinct.len() != d.hops.len() {
            return Err(format!("loop in hop trace {:?}", d.hops));
        }
        if d.hops.first() != Some(&d.src) || d.hops.last() != Some(&d.dst) {
            return Err(format!(
                "hop trace {:?} does not join {} and {}",
                d.hops, d.src, d.dst
            ));
        }
    }
    Ok(())
}

/// No node transmits while it decodes a frame. Needs the MAC audit.
pub fn half_duplex(sim: &Simulation) -> Check {
    let audit = sim.mac().audit().ok_or("MAC audit not enabled")?;
    let n = sim.world().node_count();
    let mut tx: Vec<Vec<_>> = vec![Vec::new(); n];
    for &(node, s, e) in &audit.tx {
        tx[node.index()].push((s, e));
    }
    for &(node, rs, re) in &audit.rx {
        if let Some(&(ts, te)) = tx[node.index()]
            .iter()
            .find(|&&(ts, te)| rs < te && ts < re)
        {
            return Err(format!(
                "node {node} sent [{ts}, {te}) while receiving [{rs}, {re})"
            ));
        }
    }
    Ok(())
}

/// No node starts a transmission of its own while its NAV is set.
pub fn nav_soundness(sim: &Simulation) -> Check {
    let audit = sim.mac().audit().ok_or("MAC audit not enabled")?;
    let n = sim.world().node_count();
    let mut nav: Vec<Vec<_>> = vec![Vec::new(); n];
    for &(node, set, until) in &audit.nav {
        nav[node.index()].push((set, until));
    }
    for &(node, t) in &audit.initiations {
        if let Some(&(set, until)) = nav[node.index()]
            .iter()
            .find(|&&(set, until)| set < t && t < until)
        {
            return Err(format!(
                "node {node} initiated at {t} under NAV set at {set} until {until}"
            ));
        }
    }
    if sim.mac().stats().nav_violations > 0 {
        return Err(format!(
            "{} NAV violations counted",
            sim.mac().stats().nav_violations
        ));
    }
    Ok(())
}

/// No frame was attempted more than `retry_limit + 1` times.
pub fn retry_bound(sim: &Simulation) -> Check {
    let limit = sim.config().mac.retry_limit + 1;
    let max = sim.mac().stats().max_attempts;
    if max > limit {
        return Err(format!("a frame took {max} attempts, limit {limit}"));
    }
    Ok(())
}

/// Every node's consumed energy equals the sum of power times duration over
/// its charges, the last charge of a dying node excepted (it is cut to the
/// remaining budget). Needs the charge log.
pub fn energy_conservation(sim: &Simulation, report: &MetricsReport) -> Check {
    let energy = sim.energy();
    let log = energy.log().ok_or("energy log not enabled")?;
    let n = report.nodes;
    let mut per_node = vec![0.0; n];
    let mut last_charge = vec![None; n];
    for (i, rec) in log.iter().enumerate() {
        let full = energy.power(rec.role) * rec.duration.as_secs_f64();
        if rec.joules > full + 1e-12 {
            return Err(format!(
                "node {} charged {} J for {} J of work",
                rec.node, rec.joules, full
            ));
        }
        per_node[rec.node.index()] += rec.joules;
        last_charge[rec.node.index()] = Some(i);
    }
    let dead: HashSet<NodeId> = energy.deaths().iter().map(|d| d.1).collect();
    for (i, rec) in log.iter().enumerate() {
        let full = energy.power(rec.role) * rec.duration.as_secs_f64();
        let cut = dead.contains(&rec.node) && last_charge[rec.node.index()] == Some(i);
        if !cut && (rec.joules - full).abs() > 1e-9 {
            return Err(format!(
                "node {} charged {} J instead of {} J",
                rec.node, rec.joules, full
            ));
        }
    }
    let initial = sim.config().energy.initial_j;
    for (i, &c) in energy.consumed().iter().enumerate() {
        if (c - per_node[i]).abs() > 1e-9 {
            return Err(format!(
                "node {i} consumed {c} J but its charges sum to {} J",
                per_node[i]
            ));
        }
        if c > initial + 1e-9 {
            return Err(format!("node {i} consumed {c} J from a {initial} J budget"));
        }
    }
    let total: f64 = per_node.iter().sum();
    if (report.energy_total_j - total).abs() > 1e-6 {
        return Err(format!(
            "report total {} J, charges {} J",
            report.energy_total_j, total
        ));
    }
    Ok(())
}

/// Dead-node counts never decrease and end at the reported total.
pub fn dead_node_monotonicity(sim: &Simulation, report: &MetricsReport) -> Check {
    let tl = &report.dead_node_timeline;
    if tl.windows(2).any(|w| w[1].1 < w[0].1 || w[1].0 < w[0].0) {
        return Err(format!("timeline not monotone: {tl:?}"));
    }
    let last = tl.last().map_or(0, |x| x.1);
    if last != report.dead_nodes || report.dead_nodes != report.nodes - sim.energy().alive_count() {
        return Err(format!(
            "timeline ends at {last}, report says {}",
            report.dead_nodes
        ));
    }
    Ok(())
}

/// For every seen entry: the after-rebroadcast count never exceeds the number
/// of distinct queriers, and no node keeps an entry for its own flood.
pub fn query_bookkeeping(sim: &Simulation) -> Check {
    for node in sim.world().nodes() {
        for (id, entry) in sim.router().seen_entries(node) {
            if entry.after_anc as usize > entry.queried_by.len() {
                return Err(format!(
                    "node {node} counts {} late queries for {id} from {} queriers",
                    entry.after_anc,
                    entry.queried_by.len()
                ));
            }
            if id.origin == node {
                return Err(format!(
                    "origin {node} holds an entry for its own flood {id}"
                ));
            }
        }
    }
    Ok(())
}

/// The hop-count baseline sends no query traffic.
pub fn baseline_is_query_free(report: &MetricsReport) -> Check {
    if report.protocol == Protocol::Aomdv
        && (report.control_by_kind.contains_key("query")
            || report.control_by_kind.contains_key("query_reply"))
    {
        return Err(format!(
            "baseline sent query traffic: {:?}",
            report.control_by_kind
        ));
    }
    Ok(())
}

/// Runs every check that applies to a finished run. Enable the MAC audit,
/// the energy log and the delivery log before the run.
pub fn check_all(sim: &Simulation, report: &MetricsReport) -> Check {
    loop_freedom(sim)?;
    half_duplex(sim)?;
    nav_soundness(sim)?;
    retry_bound(sim)?;
    energy_conservation(sim, report)?;
    dead_node_monotonicity(sim, report)?;
    query_bookkeeping(sim)?;
    baseline_is_query_free(report)?;
    if report.mean_delay_s.is_some() != (report.delivered > 0) {
        return Err("mean delay defined without deliveries, or missing with them".into());
    }
    Ok(())
}

/// Builds, instruments and runs `cfg`, then applies [`check_all`].
pub fn run_checked(cfg: &crate::config::RunConfig) -> Result<MetricsReport, String> {
    let mut sim = Simulation::new(cfg).map_err(|e| e.to_string())?;
    sim.mac_mut().enable_audit();
    sim.energy_mut().enable_log();
    sim.enable_delivery_log();
    let report = sim.run();
    check_all(&sim, &report)?;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::RunConfig;

    #[test]
    fn uninstrumented_run_is_reported() {
        let mut cfg = RunConfig::default();
        cfg.run.horizon_s = 1.0;
        cfg.arena.nodes = 5;
        let mut sim = Simulation::new(&cfg).unwrap();
        let report = sim.run();
        assert!(half_duplex(&sim).is_err());
        assert!(energy_conservation(&sim, &report).is_err());
    }

    #[test]
    fn short_run_passes() {
        let mut cfg = RunConfig::default();
        cfg.run.horizon_s = 3.0;
        cfg.arena.nodes = 15;
        cfg.energy.initial_j = 0.3;
        run_checked(&cfg).unwrap();
    }
}
