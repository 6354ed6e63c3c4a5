use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};

use crate::controller::{
    aggregate, apply_manual_override, belief_contradicted, evaluate_hysteresis, Aggregate, BelievedValve, ControlError,
    ControlMode, ControllerState,
};
use crate::domain::{
    BandError, CommandOrigin, GreenhouseId, MoistureBand, MoistureSample, SimTime, ValveAction, ValveCommand,
};
use crate::netsim::EdgeHooks;
use crate::scenario::{ConfigError, ControlStrategy, NetworkMode, ScenarioConfig, Topology};

use super::store::{StoredRecord, TimeSeriesStore};
use super::EdgeBoundaryGuard;

#[derive(Debug, thiserror::Error)]
pub enum EdgeError {
    #[error("unknown greenhouse {0}")]
    UnknownGreenhouse(GreenhouseId),
    #[error(transparent)]
    Band(#[from] BandError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error("inverted time range: from {from} > to {to}")]
    InvertedRange { from: SimTime, to: SimTime },
    #[error("store: {0}")]
    Store(#[from] io::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SeriesMetric {
    Moisture,
    Valve,
    Commands,
}

/// Valve-open period reconstructed from issued commands. `closed_at` is
/// absent while the valve is still believed open.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ValveInterval {
    pub opened_at: SimTime,
    pub closed_at: Option<SimTime>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "metric", content = "records", rename_all = "lowercase")]
pub enum Series {
    Moisture(Vec<MoistureSample>),
    Valve(Vec<ValveInterval>),
    Commands(Vec<ValveCommand>),
}

impl Series {
    pub fn len(&self) -> usize {
        match self {
            Series::Moisture(v) => v.len(),
            Series::Valve(v) => v.len(),
            Series::Commands(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenhouseStatus {
    pub id: GreenhouseId,
    pub strategy: String,
    /// Absent until the first sample arrives.
    pub aggregate: Option<Aggregate>,
    pub valve: BelievedValve,
    pub band: MoistureBand,
    pub mode: ControlMode,
    pub samples: u64,
    pub first_sample_at: Option<SimTime>,
    pub last_sample_at: Option<SimTime>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatusSnapshot {
    pub at: SimTime,
    pub network_mode: NetworkMode,
    pub egress_count: u64,
    pub quarantined: usize,
    pub greenhouses: Vec<GreenhouseStatus>,
}

#[derive(Debug)]
struct ControlLoop {
    state: ControllerState,
    band: MoistureBand,
    /// Hysteresis runs here; other strategies act at the valve.
    edge_controlled: bool,
    strategy: &'static str,
    level_at_last_command: Option<f64>,
    samples: u64,
    first_sample_at: Option<SimTime>,
    last_sample_at: Option<SimTime>,
}

/// The edge node: persists every sample and command locally, runs one
/// control loop per greenhouse and queues valve commands for dispatch.
///
/// Mutating calls take `&mut self`; in service mode the node sits behind a
/// lock so each greenhouse's updates are serialized.
#[derive(Debug)]
pub struct EdgeNode {
    topo: Topology,
    loops: BTreeMap<GreenhouseId, ControlLoop>,
    store: TimeSeriesStore,
    guard: EdgeBoundaryGuard,
    outbox: Vec<ValveCommand>,
    clock: SimTime,
    staleness_limit: SimTime,
    reassert_margin: Option<f64>,
    store_errors: u64,
}

pub const OPERATOR: &str = "operator";

impl EdgeNode {
    pub fn new(config: &ScenarioConfig, store: TimeSeriesStore) -> Result<Self, EdgeError> {
        let topo = config.topology()?;
        let loops = config
            .greenhouses
            .iter()
            .map(|g| {
                let (band, edge_controlled) = match g.strategy {
                    ControlStrategy::Hysteresis(band) => (band, true),
                    _ => (config.reference_band, false),
                };
                let ctl = ControlLoop {
                    state: ControllerState::new(g.id, g.actuator),
                    band,
                    edge_controlled,
                    strategy: g.strategy.kind(),
                    level_at_last_command: None,
                    samples: 0,
                    first_sample_at: None,
                    last_sample_at: None,
                };
                (g.id, ctl)
            })
            .collect();
        Ok(EdgeNode {
            topo,
            loops,
            store,
            guard: EdgeBoundaryGuard::new(config.mode),
            outbox: Vec::new(),
            clock: SimTime::ZERO,
            staleness_limit: SimTime::from_secs(config.control.staleness_limit),
            reassert_margin: config.control.reassert_margin,
            store_errors: 0,
        })
    }

    pub fn in_memory(config: &ScenarioConfig) -> Result<Self, EdgeError> {
        Self::new(config, TimeSeriesStore::in_memory())
    }

    pub fn clock(&self) -> SimTime {
        self.clock
    }

    /// Moves the node's clock forward; earlier instants are ignored.
    pub fn advance_clock(&mut self, now: SimTime) {
        self.clock = self.clock.max(now);
    }

    pub fn guard(&self) -> &EdgeBoundaryGuard {
        &self.guard
    }

    pub fn store(&self) -> &TimeSeriesStore {
        &self.store
    }

    pub fn flush(&mut self) -> io::Result<()> {
        self.store.flush()
    }

    pub fn greenhouses(&self) -> impl Iterator<Item = GreenhouseId> + '_ {
        self.loops.keys().copied()
    }

    /// Commands issued since the last call, in issue order.
    pub fn take_outbox(&mut self) -> Vec<ValveCommand> {
        std::mem::take(&mut self.outbox)
    }

    pub fn ingest(&mut self, sample: MoistureSample) -> Result<(), EdgeError> {
        let known = self.topo.mote_greenhouse.get(&sample.mote) == Some(&sample.greenhouse);
        if !known {
            return self.persist(StoredRecord::Quarantined(sample));
        }
        self.persist(StoredRecord::Sample(sample))?;
        let ctl = self.loops.get_mut(&sample.greenhouse).expect("topology and loops agree");
        ctl.samples += 1;
        ctl.first_sample_at.get_or_insert(sample.sampled_at);
        ctl.last_sample_at = ctl.last_sample_at.max(Some(sample.sampled_at));
        if !ctl.state.record_sample(sample) {
            return Ok(());
        }
        if ctl.edge_controlled && ctl.state.mode == ControlMode::Auto {
            self.evaluate(sample.greenhouse)?;
        }
        Ok(())
    }

    pub fn set_band(&mut self, greenhouse: GreenhouseId, band: MoistureBand) -> Result<(), EdgeError> {
        band.check()?;
        let at = self.clock;
        let ctl = self.loop_mut(greenhouse)?;
        ctl.band = band;
        self.persist(StoredRecord::BandChange {
            greenhouse,
            at,
            band,
            operator: OPERATOR.into(),
        })
    }

    pub fn set_mode(&mut self, greenhouse: GreenhouseId, mode: ControlMode) -> Result<(), EdgeError> {
        let at = self.clock;
        let ctl = self.loop_mut(greenhouse)?;
        if ctl.state.mode == mode {
            return Ok(());
        }
        ctl.state.mode = mode;
        let evaluate_now = mode == ControlMode::Auto && ctl.edge_controlled;
        self.persist(StoredRecord::ModeChange {
            greenhouse,
            at,
            mode,
            operator: OPERATOR.into(),
        })?;
        if evaluate_now {
            self.evaluate(greenhouse)?;
        }
        Ok(())
    }

    pub fn manual_valve(&mut self, greenhouse: GreenhouseId, action: ValveAction) -> Result<(), EdgeError> {
        let now = self.clock;
        let staleness = self.staleness_limit;
        let ctl = self.loop_mut(greenhouse)?;
        let (next, cmd) = apply_manual_override(&ctl.state, action, now)?;
        ctl.state = next;
        let level = aggregate(&ctl.state.samples(), now, staleness).ok().map(|a| a.value);
        self.issue(greenhouse, cmd, level)
    }

    pub fn query_series(
        &self,
        greenhouse: GreenhouseId,
        from: SimTime,
        to: SimTime,
        metric: SeriesMetric,
    ) -> Result<Series, EdgeError> {
        if from > to {
            return Err(EdgeError::InvertedRange { from, to });
        }
        if !self.loops.contains_key(&greenhouse) {
            return Err(EdgeError::UnknownGreenhouse(greenhouse));
        }
        let in_range = || self.store.range(greenhouse, from, to);
        Ok(match metric {
            SeriesMetric::Moisture => Series::Moisture(
                in_range()
                    .filter_map(|r| match r {
                        StoredRecord::Sample(s) => Some(*s),
                        _ => None,
                    })
                    .collect(),
            ),
            SeriesMetric::Commands => Series::Commands(
                in_range()
                    .filter_map(|r| match r {
                        StoredRecord::Command { command, .. } => Some(*command),
                        _ => None,
                    })
                    .collect(),
            ),
            SeriesMetric::Valve => Series::Valve(self.valve_intervals(greenhouse, from, to)),
        })
    }

    /// Believed open intervals overlapping `[from, to]`, clipped to it.
    fn valve_intervals(&self, greenhouse: GreenhouseId, from: SimTime, to: SimTime) -> Vec<ValveInterval> {
        let mut intervals = Vec::new();
        let mut open_since: Option<SimTime> = None;
        for rec in self.store.all(greenhouse) {
            let StoredRecord::Command { command, .. } = rec else { continue };
            match (command.action, open_since) {
                (ValveAction::Open, None) => open_since = Some(command.issued_at),
                (ValveAction::Close, Some(start)) => {
                    intervals.push((start, Some(command.issued_at)));
                    open_since = None;
                }
                _ => {}
            }
        }
        if let Some(start) = open_since {
            intervals.push((start, None));
        }
        intervals
            .into_iter()
            .filter(|&(start, end)| start <= to && end.is_none_or(|e| e >= from))
            .map(|(start, end)| ValveInterval {
                opened_at: start.max(from),
                closed_at: end.map(|e| e.min(to)),
            })
            .collect()
    }

    pub fn live_status(&self) -> StatusSnapshot {
        let greenhouses = self
            .loops
            .iter()
            .map(|(&id, ctl)| GreenhouseStatus {
                id,
                strategy: ctl.strategy.to_string(),
                aggregate: aggregate(&ctl.state.samples(), self.clock, self.staleness_limit).ok(),
                valve: ctl.state.believed_valve,
                band: ctl.band,
                mode: ctl.state.mode,
                samples: ctl.samples,
                first_sample_at: ctl.first_sample_at,
                last_sample_at: ctl.last_sample_at,
            })
            .collect();
        StatusSnapshot {
            at: self.clock,
            network_mode: self.guard.mode(),
            egress_count: self.guard.egress_count(),
            quarantined: self.store.quarantined().len(),
            greenhouses,
        }
    }

    /// Audit trail of band and mode changes for `greenhouse`.
    pub fn audit_log(&self, greenhouse: GreenhouseId) -> Vec<StoredRecord> {
        self.store
            .all(greenhouse)
            .filter(|r| matches!(r, StoredRecord::BandChange { .. } | StoredRecord::ModeChange { .. }))
            .cloned()
            .collect()
    }

    pub fn store_errors(&self) -> u64 {
        self.store_errors
    }

    fn loop_mut(&mut self, greenhouse: GreenhouseId) -> Result<&mut ControlLoop, EdgeError> {
        self.loops.get_mut(&greenhouse).ok_or(EdgeError::UnknownGreenhouse(greenhouse))
    }

    fn evaluate(&mut self, greenhouse: GreenhouseId) -> Result<(), EdgeError> {
        let now = self.clock;
        let ctl = self.loops.get_mut(&greenhouse).expect("caller checked greenhouse");
        let Ok(agg) = aggregate(&ctl.state.samples(), now, self.staleness_limit) else {
            return Ok(());
        };
        if let (Some(margin), Some(level)) = (self.reassert_margin, ctl.level_at_last_command) {
            if belief_contradicted(ctl.state.believed_valve, &ctl.band, agg.value, level, margin) {
                ctl.state.believed_valve = BelievedValve::Unknown;
            }
        }
        if let Some(cmd) = evaluate_hysteresis(&ctl.state, &ctl.band, agg.value, now)? {
            self.issue(greenhouse, cmd, Some(agg.value))?;
        }
        Ok(())
    }

    fn issue(&mut self, greenhouse: GreenhouseId, command: ValveCommand, level: Option<f64>) -> Result<(), EdgeError> {
        let ctl = self.loops.get_mut(&greenhouse).expect("caller checked greenhouse");
        ctl.state.record_issued(&command);
        ctl.level_at_last_command = level;
        self.outbox.push(command);
        self.persist(StoredRecord::Command { greenhouse, command })
    }

    fn persist(&mut self, record: StoredRecord) -> Result<(), EdgeError> {
        self.store.append(record)?;
        self.guard.record_local(1);
        Ok(())
    }
}

impl EdgeHooks for EdgeNode {
    fn on_sample(&mut self, sample: MoistureSample, now: SimTime) -> Vec<ValveCommand> {
        self.advance_clock(now);
        if self.ingest(sample).is_err() {
            self.store_errors += 1;
        }
        self.take_outbox()
    }

    fn on_clock(&mut self, now: SimTime) -> Vec<ValveCommand> {
        self.advance_clock(now);
        self.take_outbox()
    }

    fn egress_count(&self) -> u64 {
        self.guard.egress_count()
    }
}

/// Origin of every command persisted for `greenhouse`, for audits.
pub fn command_origins(store: &TimeSeriesStore, greenhouse: GreenhouseId) -> Vec<(SimTime, CommandOrigin)> {
    store
        .all(greenhouse)
        .filter_map(|r| match r {
            StoredRecord::Command { command, .. } => Some((command.issued_at, command.origin)),
            _ => None,
        })
        .collect()
}
