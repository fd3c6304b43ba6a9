//! Agent-based distribution dynamics with upstream preferences.
//!
//! Each distributor keeps one sub-stock per upstream source, `(i|j)`.
//! Manufacturers hold a single production stock `(m|ORIGIN)`. Orders for
//! sub-stock `(i|j)` are placed with `j` and split over `j`'s own sub-stocks
//! following the order tensor conditioned on `j`.
//!
//! One simulated day:
//! 1. shipments sent the previous day arrive;
//! 2. manufacturers produce (unless halted by a shock);
//! 3. every sub-stock serves its claims, i.e. final-buyer demand plus the
//!    orders placed against it the previous day, rationing proportionally
//!    when short;
//! 4. every distributor sub-stock orders
//!    `max(0, d(t−1) + (s^T − s) / τ)` from its end-of-day level.

mod engine;
mod init;
mod metrics;
mod sweep;

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::ingest::EntityId;
use crate::tensors::{OrderTransitionTensor, TensorError};

pub use engine::{run, Audit, DayRecord, Routing, SimRun, SimState};
pub use init::{init_from_data, system_from_log, FlowTotals, InitReport};
pub use metrics::{deficit, path_usage, resupply_window, PathUsage, Window};
pub use sweep::{
    sweep_phi, write_frontier_csv, write_run_csv, write_windows_csv, RunSeries, SweepConfig, SweepResult,
    SweepRow, WindowRow,
};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("duplicate sub-stock ({0}|{1})")]
    DuplicateSlot(u32, u32),
    #[error("total final-buyer demand is zero")]
    ZeroDemand,
    #[error("steady-state demand did not converge")]
    SteadyState,
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn default_tau() -> f64 {
    5.0
}
fn default_horizon() -> usize {
    180
}

/// Run parameters shared by every scenario of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    /// Inventory restoration time in days.
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            tau: default_tau(),
            horizon: default_horizon(),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.tau >= 1.0) {
            return Err(SimError::Config("tau must be >= 1".into()));
        }
        if self.horizon == 0 {
            return Err(SimError::Config("horizon must be >= 1".into()));
        }
        Ok(())
    }
}

/// A production shock. `shock_fraction` of every manufacturer stock is lost
/// at the start of day `t_star` (0 means before the first day).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShockSpec {
    pub shock_fraction: f64,
    #[serde(default)]
    pub t_star: usize,
    #[serde(default = "yes")]
    pub production_halt: bool,
}

fn yes() -> bool {
    true
}

impl ShockSpec {
    pub fn new(shock_fraction: f64, t_star: usize, production_halt: bool) -> Result<Self, SimError> {
        let s = ShockSpec {
            shock_fraction,
            t_star,
            production_halt,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(0.0..=1.0).contains(&self.shock_fraction) {
            return Err(SimError::Config("shock_fraction must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// A sub-stock `(holder | source)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Slot {
    pub holder: EntityId,
    pub source: EntityId,
    /// Target level; the production capacity for manufacturers.
    pub target: f64,
    /// Daily final-buyer demand served from this sub-stock.
    pub demand: f64,
    /// Share of the holder's receipts that came from `source`.
    pub share: f64,
    pub producer: bool,
}

/// Immutable description of a system: sub-stocks and the preference tensors.
#[derive(Debug, Clone)]
pub struct SimSystem {
    pub slots: Vec<Slot>,
    pub two_step: OrderTransitionTensor,
    pub one_step: OrderTransitionTensor,
    index: HashMap<(EntityId, EntityId), usize>,
    by_holder: BTreeMap<EntityId, Vec<usize>>,
}

impl SimSystem {
    pub fn new(
        slots: Vec<Slot>,
        two_step: OrderTransitionTensor,
        one_step: OrderTransitionTensor,
    ) -> Result<Self, SimError> {
        let mut index = HashMap::new();
        let mut by_holder: BTreeMap<EntityId, Vec<usize>> = BTreeMap::new();
        for (n, s) in slots.iter().enumerate() {
            if !(s.target >= 0.0 && s.demand >= 0.0 && s.share >= 0.0) {
                return Err(SimError::Config(format!(
                    "sub-stock ({}|{}) has a negative or undefined level",
                    s.holder.0, s.source.0
                )));
            }
            if index.insert((s.holder, s.source), n).is_some() {
                return Err(SimError::DuplicateSlot(s.holder.0, s.source.0));
            }
            by_holder.entry(s.holder).or_default().push(n);
        }
        Ok(SimSystem {
            slots,
            two_step,
            one_step,
            index,
            by_holder,
        })
    }

    pub fn slot(&self, holder: EntityId, source: EntityId) -> Option<usize> {
        self.index.get(&(holder, source)).copied()
    }

    pub fn holder_slots(&self, holder: EntityId) -> &[usize] {
        self.by_holder.get(&holder).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn holders(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.by_holder.keys().copied()
    }

    /// Total daily final-buyer demand.
    pub fn total_demand(&self) -> f64 {
        self.slots.iter().map(|s| s.demand).sum()
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }
}
