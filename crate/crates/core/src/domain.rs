//! Shared identifiers, units and message payloads.

use std::fmt;
use std::ops::{Add, Sub};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident, $prefix:literal) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub u16);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, concat!($prefix, "{}"), self.0)
            }
        }
    };
}

id_newtype!(
    /// Sensor mote, unique within a scenario.
    MoteId,
    "mote-"
);
id_newtype!(GreenhouseId, "gh-");
id_newtype!(
    /// Valve actuator (one per greenhouse).
    ActuatorId,
    "act-"
);
id_newtype!(GatewayId, "gw-");

/// Simulated time since scenario start, millisecond resolution.
///
/// Scenario-level periods are whole seconds; the sub-second part only
/// carries link latency. Serialized as seconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SimTime(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * 1000)
    }

    /// Rounds to the nearest millisecond; negative input saturates at zero.
    pub fn from_secs_f64(s: f64) -> Self {
        SimTime((s * 1000.0).round().max(0.0) as u64)
    }

    pub const fn as_millis(self) -> u64 {
        self.0
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }

    pub fn saturating_sub(self, other: SimTime) -> SimTime {
        SimTime(self.0.saturating_sub(other.0))
    }
}

impl Add for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl Sub for SimTime {
    type Output = SimTime;
    fn sub(self, rhs: SimTime) -> SimTime {
        SimTime(self.0 - rhs.0)
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:03}", self.0 / 1000, self.0 % 1000)
    }
}

impl Serialize for SimTime {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(self.as_secs_f64())
    }
}

impl<'de> Deserialize<'de> for SimTime {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let secs = f64::deserialize(d)?;
        if !secs.is_finite() || secs < 0.0 {
            return Err(serde::de::Error::custom("timestamp must be a nonnegative number of seconds"));
        }
        Ok(SimTime::from_secs_f64(secs))
    }
}

/// Rounds a moisture value to the 0.01 percent sensor resolution.
pub fn quantize_moisture(value: f64) -> f64 {
    (value * 100.0).round() / 100.0
}

/// One soil-moisture reading reported by a mote.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoistureSample {
    pub mote: MoteId,
    pub greenhouse: GreenhouseId,
    /// Percent volumetric water content.
    pub moisture: f64,
    pub sampled_at: SimTime,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ValveAction {
    Open,
    Close,
}

impl ValveAction {
    pub fn as_str(self) -> &'static str {
        match self {
            ValveAction::Open => "open",
            ValveAction::Close => "close",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CommandOrigin {
    AutoController,
    ManualOperator,
}

impl CommandOrigin {
    pub fn as_str(self) -> &'static str {
        match self {
            CommandOrigin::AutoController => "auto",
            CommandOrigin::ManualOperator => "manual",
        }
    }
}

/// Open/close instruction addressed to a valve actuator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValveCommand {
    pub target: ActuatorId,
    pub action: ValveAction,
    pub issued_at: SimTime,
    pub origin: CommandOrigin,
}

/// Target moisture interval `[low_lim, upper_lim]` in percent.
///
/// Fields are public so scenario files can carry invalid bands into
/// validation; use [`MoistureBand::new`] when building one in code.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MoistureBand {
    pub low_lim: f64,
    pub upper_lim: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BandError {
    #[error("band inverted: low_lim must be below upper_lim")]
    Inverted,
    #[error("band limits must lie within [0, 100]")]
    OutOfRange,
}

impl MoistureBand {
    pub fn new(low_lim: f64, upper_lim: f64) -> Result<Self, BandError> {
        let band = MoistureBand { low_lim, upper_lim };
        band.check()?;
        Ok(band)
    }

    pub fn check(&self) -> Result<(), BandError> {
        if !(self.low_lim.is_finite() && self.upper_lim.is_finite())
            || self.low_lim < 0.0
            || self.upper_lim > 100.0
        {
            return Err(BandError::OutOfRange);
        }
        if self.low_lim >= self.upper_lim {
            return Err(BandError::Inverted);
        }
        Ok(())
    }

    /// Inclusive membership, optionally widened by `tolerance` on both sides.
    pub fn contains(&self, value: f64, tolerance: f64) -> bool {
        value >= self.low_lim - tolerance && value <= self.upper_lim + tolerance
    }
}

impl Default for MoistureBand {
    fn default() -> Self {
        MoistureBand {
            low_lim: 50.0,
            upper_lim: 55.0,
        }
    }
}

/// Plant water demand, in percent moisture per hour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantProfile {
    pub name: String,
    pub uptake_rate_day: f64,
    pub uptake_rate_night: f64,
}
