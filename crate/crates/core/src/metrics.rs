//! Run metrics, their serialized forms, and cross-seed aggregation.
//!
//! CSV columns of `runs.csv` (one row per run), in order: `seed`, `protocol`,
//! `nodes`, `horizon_s`, `offered`, `delivered`, `pdr`, `mean_delay_s`,
//! `control_tx`, `overhead_ratio`, `energy_total_j`, `energy_sd_j`,
//! `dead_nodes`, `lifetime_s`. Undefined values are empty cells.
//! `timeline.csv` has columns `t_s`, `dead`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;
use statrs::distribution::{Binomial, ContinuousCDF, DiscreteCDF, StudentsT};

use crate::config::Protocol;
use crate::engine::SimTime;
use crate::world::NodeId;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub protocol: Protocol,
    pub seed: u64,
    pub nodes: usize,
    pub horizon_s: f64,
    pub offered: u64,
    pub delivered: u64,
    pub pdr: Option<f64>,
    pub mean_delay_s: Option<f64>,
    /// Routing control transmissions, counted once per hop.
    pub control_tx: u64,
    pub control_by_kind: BTreeMap<String, u64>,
    pub overhead_ratio: Option<f64>,
    pub energy_total_j: f64,
    pub energy_per_node_j: Vec<f64>,
    pub energy_sd_j: f64,
    pub dead_nodes: usize,
    /// `(t_s, dead nodes so far)` at every death.
    pub dead_node_timeline: Vec<(f64, usize)>,
    pub lifetime_s: f64,
    pub data_collisions: u64,
    pub late_replies: u64,
    pub drops: BTreeMap<String, u64>,
    /// Engine events executed.
    pub events: u64,
}

pub fn pdr(delivered: u64, offered: u64) -> Option<f64> {
    (offered > 0).then(|| delivered as f64 / offered as f64)
}

pub fn overhead_ratio(control_tx: u64, delivered: u64) -> Option<f64> {
    (delivered > 0).then(|| control_tx as f64 / delivered as f64)
}

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

/// Sample standard deviation; zero for fewer than two values.
pub fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values).unwrap_or(0.0);
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Cumulative dead count after each death, deaths sorted by time.
pub fn dead_timeline(deaths: &[(SimTime, NodeId)]) -> Vec<(SimTime, usize)> {
    let mut sorted: Vec<SimTime> = deaths.iter().map(|d| d.0).collect();
    sorted.sort();
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, t)| (t, i + 1))
        .collect()
}

/// First time fewer than `ceil(n/2)` nodes are alive, else the horizon.
pub fn lifetime(deaths: &[(SimTime, NodeId)], n: usize, horizon: SimTime) -> SimTime {
    let need = n.div_ceil(2);
    for (t, dead) in dead_timeline(deaths) {
        if n - dead < need {
            return t.min(horizon);
        }
    }
    horizon
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub sd: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Fewer than two samples: the interval collapses to the mean.
    pub degenerate: bool,
}

/// Mean, sample sd and two-sided 95% Student-t interval.
pub fn summarize(values: &[f64]) -> Option<Summary> {
    let m = mean(values)?;
    let n = values.len();
    if n < 2 {
        return Some(Summary {
            n,
            mean: m,
            sd: 0.0,
            ci_low: m,
            ci_high: m,
            degenerate: true,
        });
    }
    let sd = sample_sd(values);
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("valid degrees of freedom")
        .inverse_cdf(0.975);
    let half = t * sd / (n as f64).sqrt();
    Some(Summary {
        n,
        mean: m,
        sd,
        ci_low: m - half,
        ci_high: m + half,
        degenerate: false,
    })
}

/// One-sided sign test on paired differences: the probability of at least
/// `wins` successes out of `wins + losses` fair coin flips. Ties are dropped
/// before calling.
pub fn sign_test(wins: u64, losses: u64) -> f64 {
    let n = wins + losses;
    if n == 0 || wins == 0 {
        return 1.0;
    }
    let b = Binomial::new(0.5, n).expect("valid binomial");
    b.sf(wins - 1)
}

/// Per-metric summaries across runs. Metrics undefined in a run are left out
/// of that metric's sample.
pub fn aggregate(runs: &[MetricsReport]) -> BTreeMap<&'static str, Option<Summary>> {
    let pick = |f: &dyn Fn(&MetricsReport) -> Option<f64>| -> Option<Summary> {
        let vals: Vec<f64> = runs.iter().filter_map(f).collect();
        summarize(&vals)
    };
    let mut out = BTreeMap::new();
    out.insert("pdr", pick(&|r| r.pdr));
    out.insert("mean_delay_s", pick(&|r| r.mean_delay_s));
    out.insert("overhead_ratio", pick(&|r| r.overhead_ratio));
    out.insert("energy_total_j", pick(&|r| Some(r.energy_total_j)));
    out.insert("energy_sd_j", pick(&|r| Some(r.energy_sd_j)));
    out.insert("dead_nodes", pick(&|r| Some(r.dead_nodes as f64)));
    out.insert("lifetime_s", pick(&|r| Some(r.lifetime_s)));
    out
}

pub const RUN_COLUMNS: [&str; 14] = [
    "seed",
    "protocol",
    "nodes",
    "horizon_s",
    "offered",
    "delivered",
    "pdr",
    "mean_delay_s",
    "control_tx",
    "overhead_ratio",
    "energy_total_j",
    "energy_sd_j",
    "dead_nodes",
    "lifetime_s",
];

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl MetricsReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn csv_row(&self) -> Vec<String> {
        vec![
            self.seed.to_string(),
            self.protocol.to_string(),
            self.nodes.to_string(),
            self.horizon_s.to_string(),
            self.offered.to_string(),
            self.delivered.to_string(),
            opt(self.pdr),
            opt(self.mean_delay_s),
            self.control_tx.to_string(),
            opt(self.overhead_ratio),
            self.energy_total_j.to_string(),
            self.energy_sd_j.to_string(),
            self.dead_nodes.to_string(),
            self.lifetime_s.to_string(),
        ]
    }

    pub fn write_runs_csv<W: Write>(reports: &[MetricsReport], out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(RUN_COLUMNS)?;
        for r in reports {
            w.write_record(r.csv_row())?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_timeline_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["t_s", "dead"])?;
        for (t, n) in &self.dead_node_timeline {
            w.write_record([t.to_string(), n.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratios() {
        assert_eq!(pdr(90, 100), Some(0.9));
        assert_eq!(pdr(0, 100), Some(0.0));
        assert_eq!(pdr(0, 0), None);
        assert_eq!(overhead_ratio(40, 20), Some(2.0));
        assert_eq!(overhead_ratio(40, 0), None);
    }

    #[test]
    fn lifetime_rule() {
        let h = SimTime::from_secs(300);
        assert_eq!(lifetime(&[], 50, h), h);
        let deaths: Vec<_> = (0..26)
            .map(|i| (SimTime::from_secs(100 + 3 * i), NodeId(i as u32)))
            .collect();
        assert_eq!(lifetime(&deaths, 50, h), SimTime::from_secs(175));
        // n = 2: one survivor is still half the network.
        let two = [
            (SimTime::from_secs(5), NodeId(0)),
            (SimTime::from_secs(9), NodeId(1)),
        ];
        assert_eq!(lifetime(&two[..1], 2, h), h);
        assert_eq!(lifetime(&two, 2, h), SimTime::from_secs(9));
    }

    #[test]
    fn twenty_sixth_death_defines_lifetime() {
        let mut deaths: Vec<_> = (0..25)
            .map(|i| (SimTime::from_secs(10 + i), NodeId(i as u32)))
            .collect();
        deaths.push((SimTime::from_secs(180), NodeId(25)));
        assert_eq!(
            lifetime(&deaths, 50, SimTime::from_secs(300)),
            SimTime::from_secs(180)
        );
    }

    #[test]
    fn summaries() {
        let s = summarize(&[0.7, 0.7, 0.7]).unwrap();
        assert!(s.sd < 1e-12);
        let s = summarize(&[0.8, 1.0]).unwrap();
        assert!((s.mean - 0.9).abs() < 1e-12);
        assert!(s.ci_low < 0.8 && s.ci_high > 1.0);
        let one = summarize(&[3.0]).unwrap();
        assert!(one.degenerate);
        assert!(summarize(&[]).is_none());
    }

    #[test]
    fn ci_uses_t_quantile() {
        // n = 10, sd = 1 -> half width t_{0.975, 9} / sqrt(10) = 2.2622 / 3.1623
        let vals: Vec<f64> = (0..10)
            .map(|i| if i % 2 == 0 { 1.0 } else { -1.0 })
            .collect();
        let s = summarize(&vals).unwrap();
        let half = (s.ci_high - s.ci_low) / 2.0;
        assert!((half - 2.262_157 * s.sd / 10f64.sqrt()).abs() < 1e-5);
    }

    #[test]
    fn sign_test_tail() {
        // 10 of 10: 2^-10.
        assert!((sign_test(10, 0) - 1.0 / 1024.0).abs() < 1e-12);
        // 8 of 10: (45 + 10 + 1) / 1024.
        assert!((sign_test(8, 2) - 56.0 / 1024.0).abs() < 1e-12);
        assert_eq!(sign_test(0, 10), 1.0);
        assert_eq!(sign_test(0, 0), 1.0);
    }

    #[test]
    fn timeline_is_monotone() {
        let deaths = [(SimTime(30), NodeId(1)), (SimTime(10), NodeId(0))];
        assert_eq!(
            dead_timeline(&deaths),
            vec![(SimTime(10), 1), (SimTime(30), 2)]
        );
    }
}
