//! Soil-moisture dynamics: temperature-dependent plant uptake, and
//! infiltration while the valve is open, with poorer retention in dry soil.
//!
//! Integration is explicit Euler, one call per interval of at most an hour.

use serde::{Deserialize, Serialize};

use crate::domain::{PlantProfile, SimTime};

/// Longest interval a single [`step`] may cover, in seconds.
pub const MAX_STEP_SECS: f64 = 3600.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SoilError {
    #[error("step length must be in (0, {MAX_STEP_SECS}] seconds, got {0}")]
    InvalidStep(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoilState {
    /// Percent volumetric water content, always within [0, 100].
    pub moisture: f64,
    pub last_update: SimTime,
}

impl SoilState {
    pub fn new(moisture: f64, at: SimTime) -> Self {
        SoilState {
            moisture: moisture.clamp(0.0, 100.0),
            last_update: at,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbientConditions {
    /// Degrees Celsius.
    pub temperature: f64,
    pub is_day: bool,
}

/// Infiltration and retention parameters of a greenhouse's soil.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SoilParams {
    /// Percent per hour gained while the valve is open and retention is 1.
    pub infil_rate: f64,
    /// Retention efficiency of completely dry soil.
    pub eta_min: f64,
    /// Moisture at and above which all infiltrating water is retained.
    pub knee: f64,
}

impl Default for SoilParams {
    fn default() -> Self {
        SoilParams {
            infil_rate: 6.0,
            eta_min: 0.3,
            knee: 40.0,
        }
    }
}

impl SoilParams {
    pub fn check(&self) -> Result<(), &'static str> {
        if self.infil_rate.is_nan() || self.infil_rate <= 0.0 {
            return Err("infiltration rate must be positive");
        }
        if !(self.eta_min > 0.0 && self.eta_min <= 1.0) {
            return Err("eta_min must be in (0, 1]");
        }
        if !(self.knee > 0.0 && self.knee <= 100.0) {
            return Err("retention knee must be in (0, 100]");
        }
        Ok(())
    }

    /// Fraction of infiltrating water the soil holds at `moisture`: a linear
    /// ramp from `eta_min` at 0 up to 1 at `knee`, flat above.
    pub fn retention_efficiency(&self, moisture: f64) -> f64 {
        if moisture >= self.knee {
            1.0
        } else {
            let m = moisture.max(0.0);
            self.eta_min + (1.0 - self.eta_min) * m / self.knee
        }
    }
}

/// Percent per hour withdrawn by the plant under `ambient`.
pub fn uptake_rate(plant: &PlantProfile, ambient: &AmbientConditions) -> f64 {
    if ambient.is_day {
        plant.uptake_rate_day
    } else {
        plant.uptake_rate_night
    }
}

/// Advances the soil by `dt_secs` seconds.
pub fn step(
    state: SoilState,
    valve_open: bool,
    ambient: &AmbientConditions,
    plant: &PlantProfile,
    soil: &SoilParams,
    dt_secs: f64,
) -> Result<SoilState, SoilError> {
    if !(dt_secs > 0.0 && dt_secs <= MAX_STEP_SECS) {
        return Err(SoilError::InvalidStep(dt_secs));
    }
    let hours = dt_secs / 3600.0;
    let mut rate = -uptake_rate(plant, ambient);
    if valve_open {
        rate += soil.infil_rate * soil.retention_efficiency(state.moisture);
    }
    Ok(SoilState {
        moisture: (state.moisture + hours * rate).clamp(0.0, 100.0),
        last_update: state.last_update + SimTime::from_secs_f64(dt_secs),
    })
}

/// Advances the soil by an arbitrary interval, splitting it into steps of
/// at most [`MAX_STEP_SECS`]. A zero interval is a no-op.
pub fn advance(
    mut state: SoilState,
    valve_open: bool,
    ambient: &AmbientConditions,
    plant: &PlantProfile,
    soil: &SoilParams,
    dt_secs: f64,
) -> SoilState {
    let mut remaining = dt_secs;
    while remaining > 0.0 {
        let chunk = remaining.min(MAX_STEP_SECS);
        state = step(state, valve_open, ambient, plant, soil, chunk).expect("chunk within step bounds");
        remaining -= chunk;
    }
    state
}
