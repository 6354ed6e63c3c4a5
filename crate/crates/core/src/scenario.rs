//! Scenario configuration: topology, plant and soil parameters, link
//! behaviour and the control strategy of each greenhouse.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::controller::TimedSchedule;
use crate::domain::{ActuatorId, BandError, GatewayId, GreenhouseId, MoistureBand, MoteId, PlantProfile, SimTime};
use crate::soil::{AmbientConditions, SoilParams};

const CALIBRATION_FIXTURE: &str = include_str!("../fixtures/calibration.toml");

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("reading scenario file: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("serializing scenario: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("unknown {kind} {id} referenced in topology")]
    UnknownReference { kind: &'static str, id: String },
    #[error("invalid scenario:\n{0}")]
    Invalid(ValidationReport),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum NetworkMode {
    /// All data stays on the edge node.
    #[default]
    EdgeOnly,
    /// Records are counted as would-be egress towards a global network.
    WithBackhaul,
}

/// Per-hop behaviour of a low-power radio link.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinkModel {
    pub loss_probability: f64,
    /// Seconds.
    pub latency_min: f64,
    /// Seconds.
    pub latency_max: f64,
}

impl LinkModel {
    pub const LOSSLESS_INSTANT: LinkModel = LinkModel {
        loss_probability: 0.0,
        latency_min: 0.0,
        latency_max: 0.0,
    };

    pub fn with_loss(self, loss_probability: f64) -> Self {
        LinkModel {
            loss_probability,
            ..self
        }
    }
}

impl Default for LinkModel {
    fn default() -> Self {
        LinkModel {
            loss_probability: 0.05,
            latency_min: 0.05,
            latency_max: 0.5,
        }
    }
}

/// Uplink covers mote→gateway→edge hops, downlink edge→gateway→actuator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Links {
    pub uplink: LinkModel,
    pub downlink: LinkModel,
}

/// Day/night temperature cycle. `day_start`/`day_end` are seconds after
/// midnight; the scenario starts at midnight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AmbientCycle {
    pub day_temperature: f64,
    pub night_temperature: f64,
    pub day_start: u64,
    pub day_end: u64,
}

impl Default for AmbientCycle {
    fn default() -> Self {
        AmbientCycle {
            day_temperature: 36.0,
            night_temperature: 30.0,
            day_start: 6 * 3600,
            day_end: 18 * 3600,
        }
    }
}

impl AmbientCycle {
    pub fn conditions_at(&self, t: SimTime) -> AmbientConditions {
        let second_of_day = (t.as_millis() / 1000) % 86_400;
        let is_day = second_of_day >= self.day_start && second_of_day < self.day_end;
        AmbientConditions {
            temperature: if is_day { self.day_temperature } else { self.night_temperature },
            is_day,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlSettings {
    /// Seconds after which a mote's latest sample no longer counts as fresh.
    pub staleness_limit: u64,
    /// Distance beyond the band, in percent, at which the edge node stops
    /// trusting its valve belief and re-issues the command. Absent disables
    /// re-assertion.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reassert_margin: Option<f64>,
}

impl Default for ControlSettings {
    fn default() -> Self {
        ControlSettings {
            staleness_limit: 300,
            reassert_margin: Some(2.0),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum ControlStrategy {
    /// Edge-resident hysteresis control over the radio network.
    Hysteresis(MoistureBand),
    /// Irrigation programmer mounted at the valve.
    TimedProgram(TimedSchedule),
    /// Farmer opening and closing the valve by hand at fixed times.
    FarmerSchedule(TimedSchedule),
}

impl ControlStrategy {
    pub fn kind(&self) -> &'static str {
        match self {
            ControlStrategy::Hysteresis(_) => "hysteresis",
            ControlStrategy::TimedProgram(_) => "timed",
            ControlStrategy::FarmerSchedule(_) => "farmer",
        }
    }

    pub fn schedule(&self) -> Option<&TimedSchedule> {
        match self {
            ControlStrategy::Hysteresis(_) => None,
            ControlStrategy::TimedProgram(s) | ControlStrategy::FarmerSchedule(s) => Some(s),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GreenhouseConfig {
    pub id: GreenhouseId,
    pub lines: u32,
    pub motes: Vec<MoteId>,
    pub actuator: ActuatorId,
    /// Liters per hour while the valve is open.
    pub flow_rate: f64,
    pub initial_moisture: f64,
    pub plant: PlantProfile,
    pub soil: SoilParams,
    pub strategy: ControlStrategy,
}

impl GreenhouseConfig {
    /// The band used for control and for time-in-band statistics.
    pub fn band(&self, reference: MoistureBand) -> MoistureBand {
        match self.strategy {
            ControlStrategy::Hysteresis(band) => band,
            _ => reference,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GatewayConfig {
    pub id: GatewayId,
    pub motes: Vec<MoteId>,
    pub actuators: Vec<ActuatorId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    /// Simulated seconds.
    pub duration: u64,
    #[serde(serialize_with = "ser_seed", deserialize_with = "de_seed")]
    pub seed: u64,
    #[serde(default)]
    pub mode: NetworkMode,
    /// Seconds between samples of each mote.
    pub sampling_period: u64,
    /// Seconds between recorded soil-state snapshots.
    pub physics_tick: u64,
    /// Band used for statistics of greenhouses without hysteresis control.
    pub reference_band: MoistureBand,
    pub ambient: AmbientCycle,
    pub links: Links,
    pub control: ControlSettings,
    pub greenhouses: Vec<GreenhouseConfig>,
    pub gateways: Vec<GatewayConfig>,
}

// TOML integers are signed; seeds above i64::MAX travel as strings.
fn ser_seed<S: Serializer>(seed: &u64, s: S) -> Result<S::Ok, S::Error> {
    match i64::try_from(*seed) {
        Ok(v) => s.serialize_i64(v),
        Err(_) => s.serialize_str(&seed.to_string()),
    }
}

fn de_seed<'de, D: Deserializer<'de>>(d: D) -> Result<u64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(u64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Int(v) => Ok(v),
        Raw::Text(s) => s.parse().map_err(serde::de::Error::custom),
    }
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn greenhouse(&self, id: GreenhouseId) -> Option<&GreenhouseConfig> {
        self.greenhouses.iter().find(|g| g.id == id)
    }

    pub fn duration_time(&self) -> SimTime {
        SimTime::from_secs(self.duration)
    }

    /// Resolves every mote and actuator to its greenhouse and gateway.
    pub fn topology(&self) -> Result<Topology, ConfigError> {
        let mut topo = Topology::default();
        for gh in &self.greenhouses {
            for &m in &gh.motes {
                topo.mote_greenhouse.insert(m, gh.id);
            }
            topo.actuator_greenhouse.insert(gh.actuator, gh.id);
            topo.greenhouse_actuator.insert(gh.id, gh.actuator);
        }
        for gw in &self.gateways {
            for &m in &gw.motes {
                if !topo.mote_greenhouse.contains_key(&m) {
                    return Err(ConfigError::UnknownReference {
                        kind: "mote",
                        id: m.to_string(),
                    });
                }
                topo.mote_gateway.insert(m, gw.id);
            }
            for &a in &gw.actuators {
                if !topo.actuator_greenhouse.contains_key(&a) {
                    return Err(ConfigError::UnknownReference {
                        kind: "actuator",
                        id: a.to_string(),
                    });
                }
                topo.actuator_gateway.insert(a, gw.id);
            }
        }
        if let Some(m) = topo.mote_greenhouse.keys().find(|m| !topo.mote_gateway.contains_key(m)) {
            return Err(ConfigError::UnknownReference {
                kind: "gateway for mote",
                id: m.to_string(),
            });
        }
        if let Some(a) = topo
            .actuator_greenhouse
            .keys()
            .find(|a| !topo.actuator_gateway.contains_key(a))
        {
            return Err(ConfigError::UnknownReference {
                kind: "gateway for actuator",
                id: a.to_string(),
            });
        }
        Ok(topo)
    }
}

/// Static routing tables derived from a scenario.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Topology {
    pub mote_greenhouse: BTreeMap<MoteId, GreenhouseId>,
    pub mote_gateway: BTreeMap<MoteId, GatewayId>,
    pub actuator_greenhouse: BTreeMap<ActuatorId, GreenhouseId>,
    pub actuator_gateway: BTreeMap<ActuatorId, GatewayId>,
    pub greenhouse_actuator: BTreeMap<GreenhouseId, ActuatorId>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

/// Every invariant violation found in a scenario; empty means valid.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn mentions(&self, needle: &str) -> bool {
        self.violations.iter().any(|v| v.message.contains(needle))
    }

    fn push(&mut self, path: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            path: path.into(),
            message: message.into(),
        });
    }

    fn band(&mut self, path: &str, band: &MoistureBand) {
        match band.check() {
            Ok(()) => {}
            Err(BandError::Inverted) => self.push(path, "band inverted"),
            Err(BandError::OutOfRange) => self.push(path, "band limits outside [0, 100]"),
        }
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for v in &self.violations {
            writeln!(f, "{}: {}", v.path, v.message)?;
        }
        Ok(())
    }
}

pub fn validate_scenario(config: &ScenarioConfig) -> ValidationReport {
    let mut report = ValidationReport::default();

    if config.duration == 0 {
        report.push("duration", "duration must be positive");
    }
    if config.sampling_period == 0 {
        report.push("sampling_period", "sampling period must be positive");
    }
    if config.physics_tick == 0 || config.physics_tick > 3600 {
        report.push("physics_tick", "physics tick must be in (0, 3600] seconds");
    }
    if config.physics_tick > config.sampling_period {
        report.push("physics_tick", "physics tick must not exceed the sampling period");
    }
    report.band("reference_band", &config.reference_band);

    let amb = &config.ambient;
    for (name, temp) in [("day_temperature", amb.day_temperature), ("night_temperature", amb.night_temperature)] {
        if !(-10.0..=60.0).contains(&temp) {
            report.push(format!("ambient.{name}"), "temperature outside [-10, 60] C");
        }
    }
    if amb.day_start >= amb.day_end || amb.day_end > 86_400 {
        report.push("ambient", "day window must satisfy day_start < day_end <= 86400");
    }

    for (name, link) in [("links.uplink", &config.links.uplink), ("links.downlink", &config.links.downlink)] {
        if !(0.0..=1.0).contains(&link.loss_probability) {
            report.push(name, "loss probability outside [0, 1]");
        }
        if !(link.latency_min >= 0.0 && link.latency_min <= link.latency_max && link.latency_max.is_finite()) {
            report.push(name, "latency bounds must satisfy 0 <= latency_min <= latency_max");
        }
    }
    if let Some(margin) = config.control.reassert_margin {
        if margin.is_nan() || margin <= 0.0 {
            report.push("control.reassert_margin", "re-assert margin must be positive");
        }
    }

    if config.greenhouses.is_empty() {
        report.push("greenhouses", "scenario has no greenhouses");
    }
    let mut gh_ids = BTreeSet::new();
    let mut motes = BTreeSet::new();
    let mut actuators = BTreeSet::new();
    for (i, gh) in config.greenhouses.iter().enumerate() {
        let p = format!("greenhouses[{i}]");
        if !gh_ids.insert(gh.id) {
            report.push(&p, format!("duplicate greenhouse id {}", gh.id));
        }
        if gh.lines == 0 {
            report.push(&p, "lines must be at least 1");
        }
        if gh.motes.is_empty() {
            report.push(&p, "greenhouse has no motes");
        }
        for m in &gh.motes {
            if !motes.insert(*m) {
                report.push(&p, format!("duplicate mote id {m}"));
            }
        }
        if !actuators.insert(gh.actuator) {
            report.push(&p, format!("duplicate actuator id {}", gh.actuator));
        }
        if gh.flow_rate.is_nan() || gh.flow_rate <= 0.0 {
            report.push(&p, "flow rate must be positive");
        }
        if !(0.0..=100.0).contains(&gh.initial_moisture) {
            report.push(&p, "initial moisture outside [0, 100]");
        }
        let plant = &gh.plant;
        if !(plant.uptake_rate_day > 0.0 && plant.uptake_rate_night > 0.0) {
            report.push(format!("{p}.plant"), "uptake rates must be positive");
        }
        if plant.uptake_rate_day < plant.uptake_rate_night {
            report.push(format!("{p}.plant"), "day uptake rate below night rate");
        }
        if let Err(msg) = gh.soil.check() {
            report.push(format!("{p}.soil"), msg);
        }
        match &gh.strategy {
            ControlStrategy::Hysteresis(band) => report.band(&format!("{p}.strategy"), band),
            ControlStrategy::TimedProgram(s) | ControlStrategy::FarmerSchedule(s) => {
                if !(s.duration > 0 && s.duration < s.period) {
                    report.push(format!("{p}.strategy"), "schedule must satisfy 0 < duration < period");
                }
            }
        }
    }

    let mut mote_attach: BTreeMap<MoteId, usize> = BTreeMap::new();
    let mut act_attach: BTreeMap<ActuatorId, usize> = BTreeMap::new();
    let mut gw_ids = BTreeSet::new();
    for (i, gw) in config.gateways.iter().enumerate() {
        let p = format!("gateways[{i}]");
        if !gw_ids.insert(gw.id) {
            report.push(&p, format!("duplicate gateway id {}", gw.id));
        }
        for m in &gw.motes {
            if !motes.contains(m) {
                report.push(&p, format!("unknown mote {m}"));
            }
            *mote_attach.entry(*m).or_default() += 1;
        }
        for a in &gw.actuators {
            if !actuators.contains(a) {
                report.push(&p, format!("unknown actuator {a}"));
            }
            *act_attach.entry(*a).or_default() += 1;
        }
    }
    for m in &motes {
        let n = mote_attach.get(m).copied().unwrap_or(0);
        if n != 1 {
            report.push("gateways", format!("mote {m} attached to {n} gateways, expected exactly 1"));
        }
    }
    for a in &actuators {
        let n = act_attach.get(a).copied().unwrap_or(0);
        if n != 1 {
            report.push("gateways", format!("actuator {a} attached to {n} gateways, expected exactly 1"));
        }
    }

    report
}

/// Calibrated plant, soil and schedule parameters shipped with the crate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub plants: BTreeMap<String, PlantRates>,
    pub soil: SoilParams,
    pub schedules: BTreeMap<String, TimedSchedule>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantRates {
    pub uptake_rate_day: f64,
    pub uptake_rate_night: f64,
}

impl Calibration {
    pub fn builtin() -> Self {
        toml::from_str(CALIBRATION_FIXTURE).expect("calibration fixture is valid TOML")
    }

    pub fn plant(&self, name: &str) -> Option<PlantProfile> {
        self.plants.get(name).map(|r| PlantProfile {
            name: name.to_string(),
            uptake_rate_day: r.uptake_rate_day,
            uptake_rate_night: r.uptake_rate_night,
        })
    }

    pub fn schedule(&self, name: &str) -> Option<TimedSchedule> {
        self.schedules.get(name).copied()
    }
}

/// Two strawberry greenhouses of four lines, two motes each, one actuator
/// each, a single gateway, three simulated days. Greenhouse 1 follows the
/// farmer's twice-daily routine; greenhouse 2 runs hysteresis on [50, 55].
pub fn default_scenario() -> ScenarioConfig {
    let cal = Calibration::builtin();
    let strawberry = cal.plant("strawberry").expect("strawberry in calibration fixture");
    let farmer = cal.schedule("farmer").expect("farmer schedule in calibration fixture");
    let greenhouse = |id: u16, motes: [u16; 2], strategy| GreenhouseConfig {
        id: GreenhouseId(id),
        lines: 4,
        motes: motes.iter().copied().map(MoteId).collect(),
        actuator: ActuatorId(id),
        flow_rate: 600.0,
        initial_moisture: 52.0,
        plant: strawberry.clone(),
        soil: cal.soil,
        strategy,
    };
    ScenarioConfig {
        duration: 3 * 86_400,
        seed: 2019,
        mode: NetworkMode::EdgeOnly,
        sampling_period: 60,
        physics_tick: 60,
        reference_band: MoistureBand::default(),
        ambient: AmbientCycle::default(),
        links: Links::default(),
        control: ControlSettings::default(),
        greenhouses: vec![
            greenhouse(1, [1, 2], ControlStrategy::FarmerSchedule(farmer)),
            greenhouse(2, [3, 4], ControlStrategy::Hysteresis(MoistureBand::default())),
        ],
        gateways: vec![GatewayConfig {
            id: GatewayId(1),
            motes: (1..=4).map(MoteId).collect(),
            actuators: vec![ActuatorId(1), ActuatorId(2)],
        }],
    }
}
