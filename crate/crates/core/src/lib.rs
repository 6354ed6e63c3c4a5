//! Edge-resident smart irrigation: soil and network simulation, hysteresis
//! valve control, local persistence and evaluation metrics.

pub mod controller;
pub mod domain;
pub mod edge;
pub mod metrics;
pub mod netsim;
pub mod report;
pub mod scenario;
pub mod soil;

pub use domain::{
    ActuatorId, CommandOrigin, GatewayId, GreenhouseId, MoistureBand, MoistureSample, MoteId, PlantProfile, SimTime,
    ValveAction, ValveCommand,
};
pub use scenario::{default_scenario, validate_scenario, ScenarioConfig, ValidationReport};
