//! Per-node energy budgets.
//!
//! Charges are `power x duration`, floored at zero remaining. A node whose
//! budget reaches zero is dead from then on: it neither transmits, receives
//! nor answers queries, and further charges are ignored.

use serde::{Deserialize, Serialize};

use crate::config::EnergyConfig;
use crate::engine::SimTime;
use crate::world::NodeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EnergyRole {
    Tx,
    Rx,
    Overhear,
    Idle,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyState {
    pub remaining: f64,
    pub alive: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChargeOutcome {
    Charged,
    /// This charge exhausted the budget.
    Died,
    /// Node already dead, or accounting disabled.
    Ignored,
}

/// One applied charge, kept only when logging is enabled.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChargeRecord {
    pub node: NodeId,
    pub role: EnergyRole,
    pub duration: SimTime,
    pub joules: f64,
}

pub struct Energy {
    cfg: EnergyConfig,
    enabled: bool,
    nodes: Vec<EnergyState>,
    consumed: Vec<f64>,
    deaths: Vec<(SimTime, NodeId)>,
    log: Option<Vec<ChargeRecord>>,
}

impl Energy {
    pub fn new(cfg: EnergyConfig, n: usize, enabled: bool) -> Self {
        Self {
            nodes: vec![
                EnergyState {
                    remaining: cfg.initial_j,
                    alive: true,
                };
                n
            ],
            consumed: vec![0.0; n],
            cfg,
            enabled,
            deaths: Vec::new(),
            log: None,
        }
    }

    pub fn enable_log(&mut self) {
        self.log = Some(Vec::new());
    }

    pub fn log(&self) -> Option<&[ChargeRecord]> {
        self.log.as_deref()
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn power(&self, role: EnergyRole) -> f64 {
        match role {
            EnergyRole::Tx => self.cfg.p_tx_w,
            EnergyRole::Rx => self.cfg.p_rx_w,
            EnergyRole::Overhear => self.cfg.p_overhear_w,
            EnergyRole::Idle => self.cfg.p_idle_w,
        }
    }

    pub fn is_alive(&self, node: NodeId) -> bool {
        self.nodes[node.index()].alive
    }

    pub fn state(&self, node: NodeId) -> EnergyState {
        self.nodes[node.index()]
    }

    pub fn charge(
        &mut self,
        node: NodeId,
        role: EnergyRole,
        duration: SimTime,
        now: SimTime,
    ) -> ChargeOutcome {
        if !self.enabled {
            return ChargeOutcome::Ignored;
        }
        let want = self.power(role) * duration.as_secs_f64();
        let st = &mut self.nodes[node.index()];
        if !st.alive {
            return ChargeOutcome::Ignored;
        }
        let applied = want.min(st.remaining);
        st.remaining -= applied;
        self.consumed[node.index()] += applied;
        if let Some(log) = &mut self.log {
            log.push(ChargeRecord {
                node,
                role,
                duration,
                joules: applied,
            });
        }
        if st.remaining <= 0.0 {
            st.remaining = 0.0;
            st.alive = false;
            self.deaths.push((now, node));
            ChargeOutcome::Died
        } else {
            ChargeOutcome::Charged
        }
    }

    pub fn consumed(&self) -> &[f64] {
        &self.consumed
    }

    pub fn total_consumed(&self) -> f64 {
        self.consumed.iter().sum()
    }

    pub fn deaths(&self) -> &[(SimTime, NodeId)] {
        &self.deaths
    }

    pub fn alive_count(&self) -> usize {
        self.nodes.iter().filter(|s| s.alive).count()
    }
}
