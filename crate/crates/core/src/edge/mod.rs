//! The edge node: local persistence, per-greenhouse control loops, the
//! edge/global boundary, and the gateway wire protocol.

pub mod frame;
mod node;
pub mod store;

use serde::Serialize;

use crate::netsim::{RunLog, SimError, Simulation};
use crate::scenario::{NetworkMode, ScenarioConfig};

pub use node::{
    command_origins, EdgeError, EdgeNode, GreenhouseStatus, Series, SeriesMetric, StatusSnapshot, ValveInterval,
    OPERATOR,
};
pub use store::{StoredRecord, TimeSeriesStore};

/// Counts records that would leave the edge network. In
/// [`NetworkMode::EdgeOnly`] nothing is ever counted; in
/// [`NetworkMode::WithBackhaul`] every persisted record is, though nothing
/// is actually transmitted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct EdgeBoundaryGuard {
    mode: NetworkMode,
    egress_counter: u64,
}

impl EdgeBoundaryGuard {
    pub fn new(mode: NetworkMode) -> Self {
        EdgeBoundaryGuard {
            mode,
            egress_counter: 0,
        }
    }

    pub fn mode(&self) -> NetworkMode {
        self.mode
    }

    pub fn egress_count(&self) -> u64 {
        self.egress_counter
    }

    /// Notes `records` newly persisted on the edge node.
    pub fn record_local(&mut self, records: u64) {
        if self.mode == NetworkMode::WithBackhaul {
            self.egress_counter += records;
        }
    }

    pub fn is_isolated(&self) -> bool {
        self.mode == NetworkMode::EdgeOnly && self.egress_counter == 0
    }
}

/// Simulates `config` against a fresh in-memory edge node.
pub fn simulate(config: &ScenarioConfig) -> Result<(RunLog, EdgeNode), SimError> {
    let sim = Simulation::new(config.clone())?;
    let mut edge = EdgeNode::in_memory(config).expect("validated scenario yields an edge node");
    Ok((sim.finish(&mut edge), edge))
}
