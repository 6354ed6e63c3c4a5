//! Irrigation decisions: the edge-triggered hysteresis controller, the
//! fixed-interval programmer / farmer schedules, and fusion of several
//! motes' samples into one moisture estimate.
//!
//! Everything here is a pure function over explicit state. Callers own the
//! state and apply issued commands to it with
//! [`ControllerState::record_issued`].

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{
    ActuatorId, CommandOrigin, GreenhouseId, MoistureBand, MoistureSample, MoteId, SimTime, ValveAction, ValveCommand,
};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ControlError {
    #[error("cannot aggregate an empty sample set")]
    NoSamples,
    #[error("hysteresis evaluated while {0} is in manual mode")]
    ManualMode(GreenhouseId),
    #[error("mode conflict: {0} is in automatic mode, switch to manual first")]
    ModeConflict(GreenhouseId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BelievedValve {
    Open,
    Closed,
    Unknown,
}

impl From<ValveAction> for BelievedValve {
    fn from(a: ValveAction) -> Self {
        match a {
            ValveAction::Open => BelievedValve::Open,
            ValveAction::Close => BelievedValve::Closed,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ControlMode {
    Auto,
    Manual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerState {
    pub greenhouse: GreenhouseId,
    pub actuator: ActuatorId,
    pub believed_valve: BelievedValve,
    pub last_samples: BTreeMap<MoteId, MoistureSample>,
    pub mode: ControlMode,
}

impl ControllerState {
    pub fn new(greenhouse: GreenhouseId, actuator: ActuatorId) -> Self {
        ControllerState {
            greenhouse,
            actuator,
            believed_valve: BelievedValve::Unknown,
            last_samples: BTreeMap::new(),
            mode: ControlMode::Auto,
        }
    }

    /// Keeps the newest sample per mote. Returns false, leaving the state
    /// untouched, when `sample` is older than the one already held.
    pub fn record_sample(&mut self, sample: MoistureSample) -> bool {
        match self.last_samples.get(&sample.mote) {
            Some(prev) if prev.sampled_at > sample.sampled_at => false,
            _ => {
                self.last_samples.insert(sample.mote, sample);
                true
            }
        }
    }

    pub fn record_issued(&mut self, cmd: &ValveCommand) {
        self.believed_valve = cmd.action.into();
    }

    pub fn samples(&self) -> Vec<MoistureSample> {
        self.last_samples.values().copied().collect()
    }

    fn command(&self, action: ValveAction, now: SimTime, origin: CommandOrigin) -> ValveCommand {
        ValveCommand {
            target: self.actuator,
            action,
            issued_at: now,
            origin,
        }
    }
}

/// Valve opening pattern repeating every `period` seconds: open at
/// `phase + k * period` for `duration` seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimedSchedule {
    pub period: u64,
    pub duration: u64,
    pub phase: u64,
}

impl TimedSchedule {
    pub fn is_open_at(&self, now: SimTime) -> bool {
        let (t, phase, period) = (now.as_millis(), self.phase * 1000, self.period * 1000);
        t >= phase && (t - phase) % period < self.duration * 1000
    }

    /// First instant strictly after `now` at which the schedule flips.
    pub fn next_transition_after(&self, now: SimTime) -> SimTime {
        let (t, phase, period) = (now.as_millis(), self.phase * 1000, self.period * 1000);
        if t < phase {
            return SimTime::from_millis(phase);
        }
        let start = phase + (t - phase) / period * period;
        let end = start + self.duration * 1000;
        SimTime::from_millis(if t < end { end } else { start + period })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub value: f64,
    /// No sample was fresh; `value` is the mean of all of them.
    pub stale: bool,
}

/// Mean of the samples taken within `staleness_limit` of `now`, or of all
/// samples (flagged stale) when none are fresh.
pub fn aggregate(samples: &[MoistureSample], now: SimTime, staleness_limit: SimTime) -> Result<Aggregate, ControlError> {
    if samples.is_empty() {
        return Err(ControlError::NoSamples);
    }
    let cutoff = now.saturating_sub(staleness_limit);
    let fresh: Vec<f64> = samples.iter().filter(|s| s.sampled_at >= cutoff).map(|s| s.moisture).collect();
    let mean = |xs: &mut dyn Iterator<Item = f64>, n: usize| xs.sum::<f64>() / n as f64;
    Ok(if fresh.is_empty() {
        Aggregate {
            value: mean(&mut samples.iter().map(|s| s.moisture), samples.len()),
            stale: true,
        }
    } else {
        Aggregate {
            value: mean(&mut fresh.iter().copied(), fresh.len()),
            stale: false,
        }
    })
}

/// Edge-triggered hysteresis: open below `low_lim`, close above
/// `upper_lim`, hold otherwise. Boundaries are strict, and nothing is
/// issued when the believed valve state already matches.
pub fn evaluate_hysteresis(
    state: &ControllerState,
    band: &MoistureBand,
    aggregated: f64,
    now: SimTime,
) -> Result<Option<ValveCommand>, ControlError> {
    if state.mode == ControlMode::Manual {
        return Err(ControlError::ManualMode(state.greenhouse));
    }
    let action = if aggregated < band.low_lim && state.believed_valve != BelievedValve::Open {
        Some(ValveAction::Open)
    } else if aggregated > band.upper_lim && state.believed_valve != BelievedValve::Closed {
        Some(ValveAction::Close)
    } else {
        None
    };
    Ok(action.map(|a| state.command(a, now, CommandOrigin::AutoController)))
}

/// True when the moisture estimate has moved at least `margin` past both
/// the band edge and the level at which the last command was issued, in the
/// direction the believed valve state cannot produce. Signals a lost
/// command: e.g. the valve is believed closed yet moisture keeps rising.
pub fn belief_contradicted(
    believed: BelievedValve,
    band: &MoistureBand,
    aggregated: f64,
    level_at_last_command: f64,
    margin: f64,
) -> bool {
    match believed {
        BelievedValve::Closed => {
            aggregated > band.upper_lim + margin && aggregated > level_at_last_command + margin
        }
        BelievedValve::Open => aggregated < band.low_lim - margin && aggregated < level_at_last_command - margin,
        BelievedValve::Unknown => false,
    }
}

/// Programmer/farmer decision: the valve should be open inside each
/// activation window and closed outside it.
pub fn evaluate_timed(
    schedule: &TimedSchedule,
    now: SimTime,
    believed: BelievedValve,
    target: ActuatorId,
) -> Option<ValveCommand> {
    let action = if schedule.is_open_at(now) {
        ValveAction::Open
    } else {
        ValveAction::Close
    };
    (believed != BelievedValve::from(action)).then_some(ValveCommand {
        target,
        action,
        issued_at: now,
        origin: CommandOrigin::AutoController,
    })
}

/// Operator command in manual mode. Re-asserting the current state still
/// yields a command so a valve that missed the previous one can catch up.
pub fn apply_manual_override(
    state: &ControllerState,
    action: ValveAction,
    now: SimTime,
) -> Result<(ControllerState, ValveCommand), ControlError> {
    if state.mode != ControlMode::Manual {
        return Err(ControlError::ModeConflict(state.greenhouse));
    }
    let cmd = state.command(action, now, CommandOrigin::ManualOperator);
    let mut next = state.clone();
    next.record_issued(&cmd);
    Ok((next, cmd))
}
