//! Discrete-event simulator for on-demand multipath routing in mobile ad hoc
//! networks.
//!
//! Two protocols share one flood: [`Protocol::ZdAomdv`] counts the
//! neighbours that already hold a route request along every discovered path
//! and prefers paths with few of them, and [`Protocol::Aomdv`] ranks by hop
//! count. Both run over a slotted 802.11 DCF model with Random Waypoint
//! mobility, CBR traffic and per-node energy budgets.
//!
//! ```
//! use zdsim_core::{Protocol, RunConfig, Simulation};
//!
//! let mut cfg = RunConfig::default();
//! cfg.run.protocol = Protocol::ZdAomdv;
//! cfg.run.horizon_s = 2.0;
//! let report = Simulation::new(&cfg).unwrap().run();
//! assert!(report.offered > 0);
//! ```

pub mod config;
pub mod energy;
pub mod engine;
pub mod fixture;
pub mod invariants;
pub mod mac;
pub mod metrics;
pub mod oracle;
pub mod packet;
pub mod routing;
pub mod scenarios;
pub mod sim;
pub mod trace;
pub mod traffic;
pub mod world;

pub use config::{ConfigError, Protocol, RunConfig};
pub use engine::{RngStreams, Scheduler, SimTime};
pub use fixture::Fixture;
pub use metrics::{MetricsReport, Summary};
pub use oracle::FrozenGraph;
pub use routing::{select_paths, Candidate, Router};
pub use sim::{SimError, Simulation};
pub use trace::{TraceEvent, TraceRecord};
pub use world::{NodeId, World};
