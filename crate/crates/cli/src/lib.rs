//! Configuration loading, single runs, parameter sweeps and the built-in
//! self-check behind the `zdsim` binary.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use rayon::prelude::*;

use zdsim_core::config::Protocol;
use zdsim_core::invariants;
use zdsim_core::metrics::{self, MetricsReport, Summary};
use zdsim_core::oracle::{interference_degree, oracle_anc, FrozenGraph};
use zdsim_core::scenarios;
use zdsim_core::{RunConfig, Simulation};

/// Environment variable that overrides `run.output_dir`.
pub const OUT_DIR_ENV: &str = "ZDSIM_OUT_DIR";

pub fn output_dir(cfg: &RunConfig) -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(&cfg.run.output_dir))
}

pub struct RunOutput {
    pub report: MetricsReport,
    /// One line per protocol event, present when tracing was requested.
    pub trace: Option<Vec<String>>,
}

/// Runs one configuration to its horizon without touching the filesystem.
pub fn execute(cfg: &RunConfig, trace: bool) -> Result<RunOutput> {
    let mut sim = Simulation::new(cfg)?;
    if trace {
        sim.enable_trace();
    }
    let report = sim.run();
    let trace = trace.then(|| sim.trace_lines());
    Ok(RunOutput { report, trace })
}

/// Writes `report.json`, `runs.csv`, `timeline.csv` and, when traced,
/// `trace.log` into `dir`.
pub fn write_outputs(dir: &Path, out: &RunOutput) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    fs::write(dir.join("report.json"), out.report.to_json() + "\n")?;
    MetricsReport::write_runs_csv(
        std::slice::from_ref(&out.report),
        fs::File::create(dir.join("runs.csv"))?,
    )?;
    out.report
        .write_timeline_csv(fs::File::create(dir.join("timeline.csv"))?)?;
    if let Some(lines) = &out.trace {
        let mut text = lines.join("\n");
        text.push('\n');
        fs::write(dir.join("trace.log"), text)?;
    }
    Ok(())
}

/// Runs `cfg` and writes its outputs. Nothing is written if the run cannot
/// start.
pub fn run(cfg: &RunConfig, trace: bool, dir: &Path) -> Result<MetricsReport> {
    let out = execute(cfg, trace)?;
    write_outputs(dir, &out)?;
    Ok(out.report)
}

/// Returns `cfg` with the numeric field at dotted path `key` set to `value`.
pub fn with_override(cfg: &RunConfig, key: &str, value: f64) -> Result<RunConfig> {
    let mut root = toml::Value::try_from(cfg).context("serializing config")?;
    let mut slot = &mut root;
    for part in key.split('.') {
        slot = match slot {
            toml::Value::Table(t) => t.get_mut(part),
            _ => None,
        }
        .with_context(|| format!("unknown config field `{key}`"))?;
    }
    *slot = match slot {
        toml::Value::Float(_) => toml::Value::Float(value),
        toml::Value::Integer(_) => {
            if value.fract() != 0.0 || value < 0.0 {
                bail!("config field `{key}` takes a non-negative integer, got {value}");
            }
            toml::Value::Integer(value as i64)
        }
        _ => bail!("config field `{key}` is not numeric"),
    };
    let text = toml::to_string(&root).context("re-serializing config")?;
    Ok(RunConfig::from_toml_str(&text)?)
}

#[derive(Clone, Debug)]
pub struct SweepRun {
    pub value: f64,
    pub report: MetricsReport,
}

#[derive(Clone, Debug)]
pub struct SweepRow {
    pub value: f64,
    pub protocol: Protocol,
    pub runs: usize,
    pub metrics: BTreeMap<&'static str, Option<Summary>>,
}

pub struct Sweep {
    pub axis: String,
    pub runs: Vec<SweepRun>,
    pub rows: Vec<SweepRow>,
}

/// Runs every combination of axis value, seed and protocol. Seeds are
/// `run.seed`, `run.seed + 1`, and so on. Independent runs execute in
/// parallel; results are ordered by value, protocol, seed.
pub fn sweep(base: &RunConfig, axis: &str, values: &[f64], seeds: u32) -> Result<Sweep> {
    if values.is_empty() {
        bail!("sweep needs at least one value for `{axis}`");
    }
    if seeds == 0 {
        bail!("sweep needs at least one seed");
    }
    let mut jobs = Vec::new();
    for &v in values {
        let cfg = with_override(base, axis, v)?;
        for p in Protocol::ALL {
            for s in 0..seeds as u64 {
                let mut c = cfg.clone();
                c.run.protocol = p;
                c.run.seed = base.run.seed + s;
                jobs.push((v, c));
            }
        }
    }
    let runs: Vec<SweepRun> = jobs
        .into_par_iter()
        .map(|(value, cfg)| {
            Ok(SweepRun {
                value,
                report: Simulation::new(&cfg)?.run(),
            })
        })
        .collect::<Result<_>>()?;
    let mut rows = Vec::new();
    for &v in values {
        for p in Protocol::ALL {
            let group: Vec<MetricsReport> = runs
                .iter()
                .filter(|r| r.value == v && r.report.protocol == p)
                .map(|r| r.report.clone())
                .collect();
            rows.push(SweepRow {
                value: v,
                protocol: p,
                runs: group.len(),
                metrics: metrics::aggregate(&group),
            });
        }
    }
    Ok(Sweep {
        axis: axis.to_string(),
        runs,
        rows,
    })
}

impl Sweep {
    /// Aggregate table: `axis`, `value`, `protocol`, `runs`, then
    /// `<metric>_mean`, `_sd`, `_ci_low`, `_ci_high` per metric.
    pub fn write_aggregate_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let names: Vec<&str> = self
            .rows
            .first()
            .map(|r| r.metrics.keys().copied().collect())
            .unwrap_or_default();
        let mut header = vec![
            "axis".to_string(),
            "value".into(),
            "protocol".into(),
            "runs".into(),
        ];
        for n in &names {
            for s in ["mean", "sd", "ci_low", "ci_high"] {
                header.push(format!("{n}_{s}"));
            }
        }
        w.write_record(&header)?;
        for row in &self.rows {
            let mut rec = vec![
                self.axis.clone(),
                row.value.to_string(),
                row.protocol.to_string(),
                row.runs.to_string(),
            ];
            for n in &names {
                match &row.metrics[n] {
                    Some(s) => {
                        rec.extend([s.mean, s.sd, s.ci_low, s.ci_high].map(|x| x.to_string()))
                    }
                    None => rec.extend(std::iter::repeat_n(String::new(), 4)),
                }
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Per-run table: the axis value followed by the usual run columns.
    pub fn write_runs_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![self.axis.clone()];
        header.extend(metrics::RUN_COLUMNS.iter().map(|s| s.to_string()));
        w.write_record(&header)?;
        for r in &self.runs {
            let mut rec = vec![r.value.to_string()];
            rec.extend(r.report.csv_row());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Writes `sweep.csv` and `runs.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        self.write_aggregate_csv(fs::File::create(dir.join("sweep.csv"))?)?;
        self.write_runs_csv(fs::File::create(dir.join("runs.csv"))?)?;
        Ok(())
    }
}

/// Parses `10,20,40` into numbers.
pub fn parse_values(list: &str) -> Result<Vec<f64>> {
    list.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse::<f64>()
                .with_context(|| format!("`{s}` is not a number"))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, outcome: std::result::Result<String, String>) -> CheckResult {
    match outcome {
        Ok(detail) => CheckResult {
            name,
            passed: true,
            detail,
        },
        Err(detail) => CheckResult {
            name,
            passed: false,
            detail,
        },
    }
}

/// The worked example: three replies counting {2, 2, 4}, B adding two on
/// the way back, and the zone-disjoint pair selected for two paths.
pub fn golden_check() -> std::result::Result<String, String> {
    let d = scenarios::worked_example_discovery(Protocol::ZdAomdv, 2);
    let mut counts: Vec<u32> = d.candidates.iter().map(|c| c.anc).collect();
    counts.sort();
    if counts != [2, 2, 4] {
        return Err(format!("reply counts {counts:?}, expected [2, 2, 4]"));
    }
    if !d
        .trace
        .iter()
        .any(|l| l.contains(" B rrep_forward ") && l.contains("anc=2->4"))
    {
        return Err("no RREP forward at B with count 2->4".into());
    }
    let fx = zdsim_core::oracle::worked_example_fixture();
    let name = |r: &Vec<zdsim_core::NodeId>| {
        r.iter()
            .map(|n| fx.names[n.index()].as_str())
            .collect::<Vec<_>>()
            .join("-")
    };
    let mut sel: Vec<String> = d.selected_routes().iter().map(name).collect();
    sel.sort();
    if sel != ["S-A-E-D", "S-C-F-D"] {
        return Err(format!("selected {sel:?}"));
    }
    let g = FrozenGraph::from_fixture(&fx, "S", "D").expect("fixture names");
    Ok(format!(
        "counts {counts:?}, selected {}, interference {}",
        sel.join(" + "),
        interference_degree(&g, &d.selected_routes())
    ))
}

/// Simulated counts equal the reference counts on `graphs` random graphs.
pub fn oracle_check(graphs: u64) -> std::result::Result<String, String> {
    let cfg = scenarios::discovery_config(Protocol::ZdAomdv, 3);
    let params = scenarios::oracle_params(&cfg);
    let replies: usize = (0..graphs)
        .into_par_iter()
        .map(|seed| {
            let g = scenarios::oracle_graph(seed);
            let want = oracle_anc(&g, &params).map_err(|e| format!("seed {seed}: {e}"))?;
            let got: BTreeMap<_, _> = scenarios::discover_on(&g.to_fixture(), g.src, g.dst, &cfg)
                .routes()
                .into_iter()
                .collect();
            if got != want {
                return Err(format!(
                    "seed {seed}: simulated {got:?}, reference {want:?}"
                ));
            }
            Ok(got.len())
        })
        .collect::<std::result::Result<Vec<_>, _>>()?
        .into_iter()
        .sum();
    Ok(format!("{graphs} graphs, {replies} replies agree"))
}

/// Hidden-terminal fixture: collisions without RTS/CTS, none with it.
pub fn mac_check(seeds: u64) -> std::result::Result<String, String> {
    let mut plain = Vec::new();
    for seed in 1..=seeds {
        let (cfg, fx) = scenarios::hidden_terminal_config(false, seed);
        let off = scenarios::fixture_simulation(&cfg, &fx)
            .run()
            .data_collisions;
        let (cfg, fx) = scenarios::hidden_terminal_config(true, seed);
        let on = scenarios::fixture_simulation(&cfg, &fx)
            .run()
            .data_collisions;
        if off == 0 {
            return Err(format!("seed {seed}: no collisions without RTS/CTS"));
        }
        if on != 0 {
            return Err(format!("seed {seed}: {on} DATA collisions with RTS/CTS"));
        }
        plain.push(off);
    }
    Ok(format!(
        "DATA collisions without RTS/CTS {plain:?}, with RTS/CTS 0"
    ))
}

/// Invariant checks over short instrumented mobile runs.
pub fn invariant_check(seeds: u64) -> std::result::Result<String, String> {
    let jobs: Vec<(Protocol, u64)> = Protocol::ALL
        .iter()
        .flat_map(|&p| (1..=seeds).map(move |s| (p, s)))
        .collect();
    jobs.into_par_iter()
        .map(|(p, seed)| {
            let mut cfg = RunConfig::default();
            cfg.run.protocol = p;
            cfg.run.seed = seed;
            cfg.run.horizon_s = 8.0;
            cfg.arena.nodes = 20;
            cfg.arena.width_m = 500.0;
            cfg.arena.height_m = 500.0;
            cfg.traffic.random_flows = 2;
            cfg.energy.initial_j = 1.0;
            cfg.mac.rts_cts = seed % 2 == 0;
            invariants::run_checked(&cfg).map_err(|e| format!("{p} seed {seed}: {e}"))
        })
        .collect::<std::result::Result<Vec<_>, _>>()?;
    Ok(format!("{} instrumented runs clean", 2 * seeds))
}

/// Golden trace, reference-count agreement, MAC sanity and invariants.
pub fn verify() -> Vec<CheckResult> {
    vec![
        check("golden trace", golden_check()),
        check("reference counts", oracle_check(120)),
        check("hidden terminal", mac_check(3)),
        check("invariants", invariant_check(4)),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn override_sets_nested_numbers() {
        let cfg = RunConfig::default();
        let c = with_override(&cfg, "mobility.v_max_mps", 20.0).unwrap();
        assert_eq!(c.mobility.v_max_mps, 20.0);
        let c = with_override(&cfg, "arena.nodes", 30.0).unwrap();
        assert_eq!(c.arena.nodes, 30);
        assert!(with_override(&cfg, "arena.nodes", 2.5).is_err());
        assert!(with_override(&cfg, "mobility.nope", 1.0).is_err());
        assert!(with_override(&cfg, "run.protocol", 1.0).is_err());
        // Validation still applies.
        assert!(with_override(&cfg, "routing.k_paths", 0.0).is_err());
    }

    #[test]
    fn values_parse() {
        assert_eq!(parse_values("10, 20,40").unwrap(), vec![10.0, 20.0, 40.0]);
        assert!(parse_values("10,x").is_err());
        assert!(parse_values("").unwrap().is_empty());
    }

    #[test]
    fn empty_sweep_is_rejected() {
        assert!(sweep(&RunConfig::default(), "mobility.v_max_mps", &[], 1).is_err());
    }

    #[test]
    fn sweep_counts_runs_and_rows() {
        let mut cfg = RunConfig::default();
        cfg.run.horizon_s = 2.0;
        cfg.arena.nodes = 10;
        let s = sweep(&cfg, "mobility.v_max_mps", &[2.0, 5.0, 10.0], 2).unwrap();
        assert_eq!(s.runs.len(), 3 * 2 * 2);
        assert_eq!(s.rows.len(), 3 * 2);
        assert!(s.rows.iter().all(|r| r.runs == 2));
        let mut buf = Vec::new();
        s.write_aggregate_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + 6);
        assert!(text.starts_with("axis,value,protocol,runs,"));
    }
}
