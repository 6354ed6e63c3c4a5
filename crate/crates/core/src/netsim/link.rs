//! Radio messages, per-hop loss and latency, and mote sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{
    quantize_moisture, ActuatorId, GatewayId, GreenhouseId, MoistureSample, MoteId, SimTime, ValveCommand,
};
use crate::scenario::LinkModel;

/// Half-width of the uniform sensor noise, in percent.
pub const SENSOR_NOISE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Node {
    Mote(MoteId),
    Gateway(GatewayId),
    Edge,
    Actuator(ActuatorId),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Payload {
    Sample(MoistureSample),
    Command(ValveCommand),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Message {
    pub id: u64,
    pub payload: Payload,
    pub route: Vec<Node>,
    /// Index of the hop currently being traversed: route[hop] -> route[hop + 1].
    pub hop: usize,
}

impl Message {
    pub fn uplink(id: u64, sample: MoistureSample, gateway: GatewayId) -> Self {
        Message {
            id,
            payload: Payload::Sample(sample),
            route: vec![Node::Mote(sample.mote), Node::Gateway(gateway), Node::Edge],
            hop: 0,
        }
    }

    pub fn downlink(id: u64, cmd: ValveCommand, gateway: GatewayId) -> Self {
        Message {
            id,
            payload: Payload::Command(cmd),
            route: vec![Node::Edge, Node::Gateway(gateway), Node::Actuator(cmd.target)],
            hop: 0,
        }
    }

    /// Node reached once the current hop completes.
    pub fn next_node(&self) -> Node {
        self.route[self.hop + 1]
    }

    pub fn is_last_hop(&self) -> bool {
        self.hop + 2 == self.route.len()
    }
}

/// Stable per-entity random streams derived from the scenario seed, so
/// adding or removing one entity leaves every other entity's draws intact.
#[derive(Debug, Clone, Copy)]
pub enum StreamKind {
    SensorNoise = 1,
    Uplink = 2,
    Downlink = 3,
}

pub fn entity_rng(seed: u64, kind: StreamKind, entity: u16) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((kind as u64) << 32) | u64::from(entity));
    rng
}

/// Outcome of sending a message over one hop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum HopOutcome {
    Arrives(SimTime),
    Dropped,
}

/// Draws loss, then latency, for one hop. Both draws are always taken
/// from `rng` in that order, so the stream position does not depend on the
/// outcome.
pub fn draw_hop(link: &LinkModel, rng: &mut impl Rng, now: SimTime) -> HopOutcome {
    let roll: f64 = rng.random();
    let latency = if link.latency_max > link.latency_min {
        rng.random_range(link.latency_min..=link.latency_max)
    } else {
        link.latency_min
    };
    if roll < link.loss_probability {
        HopOutcome::Dropped
    } else {
        HopOutcome::Arrives(now + SimTime::from_secs_f64(latency))
    }
}

pub fn noisy_reading(true_moisture: f64, noise: f64) -> f64 {
    quantize_moisture((true_moisture + noise).clamp(0.0, 100.0))
}

/// Reading of `true_moisture` with uniform noise in
/// [-SENSOR_NOISE, +SENSOR_NOISE], clamped to [0, 100].
pub fn sample_mote(
    mote: MoteId,
    greenhouse: GreenhouseId,
    true_moisture: f64,
    rng: &mut impl Rng,
    now: SimTime,
) -> MoistureSample {
    let noise = rng.random_range(-SENSOR_NOISE..=SENSOR_NOISE);
    MoistureSample {
        mote,
        greenhouse,
        moisture: noisy_reading(true_moisture, noise),
        sampled_at: now,
    }
}
