//! Run configuration.
//!
//! A single TOML file fully determines a run. Every key has a default, so an
//! empty file is a valid configuration (50 nodes, 750 x 750 m, 250 m range,
//! Random Waypoint, three concurrent paths). Durations are given in the unit
//! named by the key suffix and converted to [`SimTime`] on access.

use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

use crate::engine::SimTime;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid config field `{field}`: {reason}")]
    Field { field: &'static str, reason: String },
    #[error("reading config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn field(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field,
        reason: reason.into(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Protocol {
    ZdAomdv,
    Aomdv,
}

impl Protocol {
    pub const ALL: [Protocol; 2] = [Protocol::ZdAomdv, Protocol::Aomdv];

    pub fn as_str(self) -> &'static str {
        match self {
            Protocol::ZdAomdv => "zd-aomdv",
            Protocol::Aomdv => "aomdv",
        }
    }
}

impl std::fmt::Display for Protocol {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Protocol {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "zd-aomdv" => Ok(Protocol::ZdAomdv),
            "aomdv" => Ok(Protocol::Aomdv),
            other => Err(field(
                "run.protocol",
                format!("unknown protocol `{other}` (expected zd-aomdv or aomdv)"),
            )),
        }
    }
}

/// Accepts `true`/`false` as well as `"on"`/`"off"`.
fn on_off<'de, D: Deserializer<'de>>(d: D) -> Result<bool, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Bool(bool),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Bool(b) => Ok(b),
        Raw::Text(s) => match s.as_str() {
            "on" => Ok(true),
            "off" => Ok(false),
            other => Err(serde::de::Error::custom(format!(
                "expected on|off, got `{other}`"
            ))),
        },
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSection {
    pub protocol: Protocol,
    pub seed: u64,
    pub horizon_s: f64,
    /// Idle-drain integration and dead-node sampling period.
    pub metrics_tick_ms: f64,
    pub output_dir: String,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            protocol: Protocol::ZdAomdv,
            seed: 1,
            horizon_s: 300.0,
            metrics_tick_ms: 1000.0,
            output_dir: "out".into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArenaSection {
    pub width_m: f64,
    pub height_m: f64,
    pub radio_range_m: f64,
    pub nodes: usize,
    /// Static topology file; when set, node count comes from the fixture and
    /// mobility is bypassed.
    pub fixture: Option<String>,
}

impl Default for ArenaSection {
    fn default() -> Self {
        Self {
            width_m: 750.0,
            height_m: 750.0,
            radio_range_m: 250.0,
            nodes: 50,
            fixture: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MobilitySection {
    pub v_min_mps: f64,
    /// Zero disables movement.
    pub v_max_mps: f64,
    pub pause_s: f64,
    pub link_tick_ms: f64,
}

impl Default for MobilitySection {
    fn default() -> Self {
        Self {
            v_min_mps: 1.0,
            v_max_mps: 40.0 / 3.6,
            pause_s: 1.0,
            link_tick_ms: 100.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MacConfig {
    pub slot_us: u64,
    pub difs_us: u64,
    pub sifs_us: u64,
    pub cw_min: u32,
    pub cw_max: u32,
    pub retry_limit: u32,
    pub bitrate_bps: u64,
    /// PLCP preamble + header airtime added to every frame.
    pub plcp_us: u64,
    pub mac_header_bytes: u32,
    pub rts_bytes: u32,
    pub cts_bytes: u32,
    pub ack_bytes: u32,
    /// Unicast payloads larger than this use RTS/CTS (when enabled).
    pub rts_threshold_bytes: u32,
    #[serde(deserialize_with = "on_off")]
    pub rts_cts: bool,
    /// Loss-free channel: no carrier sense, backoff, collisions or energy;
    /// frames arrive after the per-link latency.
    #[serde(deserialize_with = "on_off")]
    pub ideal_channel: bool,
    pub ideal_latency_us: u64,
    pub broadcast_jitter_us: u64,
    pub queue_capacity: usize,
}

impl Default for MacConfig {
    fn default() -> Self {
        Self {
            slot_us: 20,
            difs_us: 50,
            sifs_us: 10,
            cw_min: 31,
            cw_max: 1023,
            retry_limit: 7,
            bitrate_bps: 2_000_000,
            plcp_us: 192,
            mac_header_bytes: 28,
            rts_bytes: 20,
            cts_bytes: 14,
            ack_bytes: 14,
            rts_threshold_bytes: 256,
            rts_cts: true,
            ideal_channel: false,
            ideal_latency_us: 1000,
            broadcast_jitter_us: 5000,
            queue_capacity: 50,
        }
    }
}

impl MacConfig {
    pub fn slot(&self) -> SimTime {
        SimTime(self.slot_us)
    }
    pub fn difs(&self) -> SimTime {
        SimTime(self.difs_us)
    }
    pub fn sifs(&self) -> SimTime {
        SimTime(self.sifs_us)
    }

    /// Airtime of a frame whose MAC-level length is `bytes`.
    pub fn airtime(&self, bytes: u32) -> SimTime {
        let bits = bytes as u64 * 8;
        SimTime(self.plcp_us + (bits * 1_000_000).div_ceil(self.bitrate_bps))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PacketSizes {
    pub rreq_base: u32,
    pub rreq_per_hop: u32,
    pub rrep: u32,
    pub query: u32,
    pub query_reply: u32,
    pub rerr: u32,
    pub data_header: u32,
}

impl Default for PacketSizes {
    fn default() -> Self {
        Self {
            rreq_base: 44,
            rreq_per_hop: 4,
            rrep: 36,
            query: 24,
            query_reply: 20,
            rerr: 24,
            data_header: 28,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RoutingConfig {
    /// Concurrent paths used for data.
    pub k_paths: usize,
    pub query_timer_ms: f64,
    /// Source wait after the first RREP before selecting paths.
    pub rrep_wait_ms: f64,
    pub rreq_retry_timeout_ms: f64,
    pub rreq_retries: u32,
    pub ttl_max: u32,
    /// Rebroadcasts allowed per node per flood.
    pub rebroadcast_cap: u32,
    pub rreq_seen_lifetime_s: f64,
    pub path_idle_lifetime_s: f64,
    /// Data packets held at a source while discovery runs.
    pub buffer_capacity: usize,
    pub sizes: PacketSizes,
}

impl Default for RoutingConfig {
    fn default() -> Self {
        Self {
            k_paths: 3,
            query_timer_ms: 15.0,
            rrep_wait_ms: 100.0,
            rreq_retry_timeout_ms: 1500.0,
            rreq_retries: 3,
            ttl_max: 16,
            rebroadcast_cap: 3,
            rreq_seen_lifetime_s: 5.0,
            path_idle_lifetime_s: 10.0,
            buffer_capacity: 64,
            sizes: PacketSizes::default(),
        }
    }
}

impl RoutingConfig {
    pub fn query_timer(&self) -> SimTime {
        SimTime::from_secs_f64(self.query_timer_ms / 1e3)
    }
    pub fn rrep_wait(&self) -> SimTime {
        SimTime::from_secs_f64(self.rrep_wait_ms / 1e3)
    }
    pub fn rreq_retry_timeout(&self) -> SimTime {
        SimTime::from_secs_f64(self.rreq_retry_timeout_ms / 1e3)
    }
    pub fn rreq_seen_lifetime(&self) -> SimTime {
        SimTime::from_secs_f64(self.rreq_seen_lifetime_s)
    }
    pub fn path_idle_lifetime(&self) -> SimTime {
        SimTime::from_secs_f64(self.path_idle_lifetime_s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EnergyConfig {
    pub initial_j: f64,
    pub p_tx_w: f64,
    pub p_rx_w: f64,
    pub p_overhear_w: f64,
    pub p_idle_w: f64,
}

impl Default for EnergyConfig {
    fn default() -> Self {
        Self {
            initial_j: 50.0,
            p_tx_w: 1.4,
            p_rx_w: 1.0,
            p_overhear_w: 1.0,
            p_idle_w: 0.05,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowSpec {
    /// Node name (fixture name, or decimal id for generated topologies).
    pub src: String,
    pub dst: String,
    #[serde(default)]
    pub rate_bps: Option<f64>,
    #[serde(default)]
    pub packet_bytes: Option<u32>,
    #[serde(default)]
    pub start_s: Option<f64>,
    #[serde(default)]
    pub stop_s: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrafficConfig {
    pub flows: Vec<FlowSpec>,
    /// Extra CBR flows between distinct random node pairs.
    pub random_flows: usize,
    pub rate_bps: f64,
    pub packet_bytes: u32,
    pub start_s: f64,
}

impl Default for TrafficConfig {
    fn default() -> Self {
        Self {
            flows: Vec::new(),
            random_flows: 1,
            rate_bps: 35_000.0,
            packet_bytes: 512,
            start_s: 1.0,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub run: RunSection,
    pub arena: ArenaSection,
    pub mobility: MobilitySection,
    pub mac: MacConfig,
    pub routing: RoutingConfig,
    pub energy: EnergyConfig,
    pub traffic: TrafficConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let mut cfg = Self::from_toml_str(&text)?;
        // Fixture paths are relative to the config file.
        if let (Some(fx), Some(dir)) = (cfg.arena.fixture.clone(), path.parent()) {
            let p = Path::new(&fx);
            if p.is_relative() {
                cfg.arena.fixture = Some(dir.join(p).display().to_string());
            }
        }
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn horizon(&self) -> SimTime {
        SimTime::from_secs_f64(self.run.horizon_s)
    }

    pub fn metrics_tick(&self) -> SimTime {
        SimTime::from_secs_f64(self.run.metrics_tick_ms / 1e3)
    }

    pub fn link_tick(&self) -> SimTime {
        SimTime::from_secs_f64(self.mobility.link_tick_ms / 1e3)
    }

    pub fn pause(&self) -> SimTime {
        SimTime::from_secs_f64(self.mobility.pause_s)
    }

    /// Checks every constraint that the run relies on. Called before any
    /// event is scheduled.
    pub fn validate(&self) -> Result<(), ConfigError> {
        fn positive(v: f64, name: &'static str) -> Result<(), ConfigError> {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(field(name, format!("must be > 0, got {v}")))
            }
        }
        fn positive_int(v: u64, name: &'static str) -> Result<(), ConfigError> {
            if v > 0 {
                Ok(())
            } else {
                Err(field(name, "must be > 0"))
            }
        }
        if !(self.run.horizon_s.is_finite() && self.run.horizon_s >= 0.0) {
            return Err(field("run.horizon_s", "must be >= 0"));
        }
        positive(self.run.metrics_tick_ms, "run.metrics_tick_ms")?;
        positive(self.arena.width_m, "arena.width_m")?;
        positive(self.arena.height_m, "arena.height_m")?;
        positive(self.arena.radio_range_m, "arena.radio_range_m")?;
        if self.arena.fixture.is_none() && self.arena.nodes == 0 {
            return Err(field("arena.nodes", "must be >= 1"));
        }
        let m = &self.mobility;
        if !(m.v_min_mps >= 0.0 && m.v_max_mps >= 0.0) {
            return Err(field("mobility.v_min_mps", "speeds must be >= 0"));
        }
        if m.v_max_mps > 0.0 && m.v_min_mps > m.v_max_mps {
            return Err(field(
                "mobility.v_min_mps",
                "must not exceed mobility.v_max_mps",
            ));
        }
        if m.v_max_mps > 0.0 && m.v_min_mps <= 0.0 {
            return Err(field("mobility.v_min_mps", "must be > 0 when nodes move"));
        }
        if !(m.pause_s.is_finite() && m.pause_s >= 0.0) {
            return Err(field("mobility.pause_s", "must be >= 0"));
        }
        positive(m.link_tick_ms, "mobility.link_tick_ms")?;
        let mac = &self.mac;
        positive_int(mac.slot_us, "mac.slot_us")?;
        positive_int(mac.difs_us, "mac.difs_us")?;
        positive_int(mac.sifs_us, "mac.sifs_us")?;
        positive_int(mac.bitrate_bps, "mac.bitrate_bps")?;
        positive_int(mac.ideal_latency_us, "mac.ideal_latency_us")?;
        if mac.cw_min == 0 || mac.cw_max < mac.cw_min {
            return Err(field("mac.cw_max", "need 0 < cw_min <= cw_max"));
        }
        if mac.queue_capacity == 0 {
            return Err(field("mac.queue_capacity", "must be >= 1"));
        }
        let r = &self.routing;
        if r.k_paths == 0 {
            return Err(field("routing.k_paths", "must be >= 1"));
        }
        positive(r.query_timer_ms, "routing.query_timer_ms")?;
        positive(r.rrep_wait_ms, "routing.rrep_wait_ms")?;
        positive(r.rreq_retry_timeout_ms, "routing.rreq_retry_timeout_ms")?;
        positive(r.rreq_seen_lifetime_s, "routing.rreq_seen_lifetime_s")?;
        positive(r.path_idle_lifetime_s, "routing.path_idle_lifetime_s")?;
        if r.ttl_max == 0 {
            return Err(field("routing.ttl_max", "must be >= 1"));
        }
        if r.rebroadcast_cap == 0 {
            return Err(field("routing.rebroadcast_cap", "must be >= 1"));
        }
        if r.buffer_capacity == 0 {
            return Err(field("routing.buffer_capacity", "must be >= 1"));
        }
        let e = &self.energy;
        positive(e.initial_j, "energy.initial_j")?;
        for (v, name) in [
            (e.p_tx_w, "energy.p_tx_w"),
            (e.p_rx_w, "energy.p_rx_w"),
            (e.p_overhear_w, "energy.p_overhear_w"),
            (e.p_idle_w, "energy.p_idle_w"),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(field(name, "must be >= 0"));
            }
        }
        let t = &self.traffic;
        positive(t.rate_bps, "traffic.rate_bps")?;
        if t.packet_bytes == 0 {
            return Err(field("traffic.packet_bytes", "must be >= 1"));
        }
        if !(t.start_s.is_finite() && t.start_s >= 0.0) {
            return Err(field("traffic.start_s", "must be >= 0"));
        }
        for f in &t.flows {
            if let Some(rate) = f.rate_bps {
                positive(rate, "traffic.flows.rate_bps")?;
            }
            if f.packet_bytes == Some(0) {
                return Err(field("traffic.flows.packet_bytes", "must be >= 1"));
            }
            if f.src == f.dst {
                return Err(field(
                    "traffic.flows",
                    format!("flow from `{}` to itself", f.src),
                ));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_uses_defaults() {
        let cfg = RunConfig::from_toml_str("").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.arena.nodes, 50);
        assert_eq!(cfg.arena.radio_range_m, 250.0);
        assert_eq!(cfg.routing.k_paths, 3);
        assert_eq!(cfg.mac.retry_limit, 7);
    }

    #[test]
    fn dotted_sections_and_switches() {
        let cfg = RunConfig::from_toml_str(
            "[run]\nprotocol = \"aomdv\"\nseed = 9\n[mac]\nrts_cts = \"off\"\nideal_channel = true\n",
        )
        .unwrap();
        assert_eq!(cfg.run.protocol, Protocol::Aomdv);
        assert!(!cfg.mac.rts_cts);
        assert!(cfg.mac.ideal_channel);
    }

    #[test]
    fn unknown_protocol_rejected() {
        let err = RunConfig::from_toml_str("[run]\nprotocol = \"dsr\"\n").unwrap_err();
        assert!(err.to_string().contains("dsr"), "{err}");
    }

    #[test]
    fn invalid_field_is_named() {
        let err = RunConfig::from_toml_str("[routing]\nk_paths = 0\n").unwrap_err();
        assert!(err.to_string().contains("routing.k_paths"), "{err}");
        let err = RunConfig::from_toml_str("[routing]\nquery_timer_ms = -1\n").unwrap_err();
        assert!(err.to_string().contains("routing.query_timer_ms"), "{err}");
        let err = RunConfig::from_toml_str("[mac]\nbogus = 1\n").unwrap_err();
        assert!(err.to_string().contains("bogus"), "{err}");
    }

    #[test]
    fn zero_horizon_is_allowed() {
        let cfg = RunConfig::from_toml_str("[run]\nhorizon_s = 0\n").unwrap();
        assert_eq!(cfg.horizon(), SimTime::ZERO);
    }

    #[test]
    fn airtime_includes_preamble() {
        let mac = MacConfig::default();
        assert_eq!(mac.airtime(20), SimTime(192 + 80));
        assert_eq!(mac.airtime(540), SimTime(192 + 2160));
    }

    #[test]
    fn serialized_config_reloads() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml_str(&cfg.to_toml_string()).unwrap();
        assert_eq!(back, cfg);
    }
}
