//! Deterministic discrete-event simulation of the irrigation network.
//!
//! Motes sample soil moisture and send readings mote → gateway → edge;
//! the edge node (reached through [`EdgeHooks`]) answers with valve
//! commands that travel edge → gateway → actuator. Programmer and farmer
//! schedules act on their valve directly, without a radio hop. Soil state
//! is integrated lazily: each greenhouse is advanced to the current instant
//! before its valve changes, a mote samples it, or a snapshot is taken.
//!
//! The event loop is single-threaded. Every random draw comes from a
//! per-entity stream of the scenario seed, so a run is a pure function of
//! its configuration.

mod event;
mod link;
mod log;

use std::collections::BTreeMap;

use rand_chacha::ChaCha8Rng;

use crate::controller::{evaluate_timed, BelievedValve};
use crate::domain::{ActuatorId, GreenhouseId, MoistureSample, MoteId, SimTime, ValveAction, ValveCommand};
use crate::scenario::{validate_scenario, ConfigError, ScenarioConfig, Topology, ValidationReport};
use crate::soil::{self, SoilState};

pub use event::{EventKind, EventQueue, SimEvent};
pub use link::{
    draw_hop, entity_rng, noisy_reading, sample_mote, HopOutcome, Message, Node, Payload, StreamKind, SENSOR_NOISE,
};
pub use log::{LogEvent, LogRecord, MessageClass, MessageCounts, RunLog, Trigger};

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid scenario:\n{0}")]
    Invalid(ValidationReport),
}

/// Callback surface through which the simulator talks to the edge node.
pub trait EdgeHooks {
    /// A sample reached the edge; returns the commands to dispatch.
    fn on_sample(&mut self, sample: MoistureSample, now: SimTime) -> Vec<ValveCommand>;

    /// Called after every event; returns commands queued by other means
    /// (operator requests, mode switches).
    fn on_clock(&mut self, _now: SimTime) -> Vec<ValveCommand> {
        Vec::new()
    }

    /// Records counted as would-be egress towards a global network.
    fn egress_count(&self) -> u64 {
        0
    }
}

/// Edge that never issues commands.
#[derive(Debug, Default)]
pub struct PassiveEdge {
    pub received: Vec<MoistureSample>,
}

impl EdgeHooks for PassiveEdge {
    fn on_sample(&mut self, sample: MoistureSample, _now: SimTime) -> Vec<ValveCommand> {
        self.received.push(sample);
        Vec::new()
    }
}

#[derive(Debug)]
struct GreenhouseSim {
    id: GreenhouseId,
    soil: SoilState,
    valve_open: bool,
    open_millis: u64,
}

pub struct Simulation {
    config: ScenarioConfig,
    topo: Topology,
    queue: EventQueue,
    log: RunLog,
    greenhouses: Vec<GreenhouseSim>,
    index: BTreeMap<GreenhouseId, usize>,
    noise: BTreeMap<MoteId, ChaCha8Rng>,
    uplink: BTreeMap<MoteId, ChaCha8Rng>,
    downlink: BTreeMap<ActuatorId, ChaCha8Rng>,
    next_msg: u64,
}

impl Simulation {
    pub fn new(config: ScenarioConfig) -> Result<Self, SimError> {
        let report = validate_scenario(&config);
        if !report.is_empty() {
            return Err(SimError::Invalid(report));
        }
        let topo = config.topology()?;
        let seed = config.seed;
        let mut sim = Simulation {
            queue: EventQueue::new(),
            log: RunLog::default(),
            greenhouses: config
                .greenhouses
                .iter()
                .map(|g| GreenhouseSim {
                    id: g.id,
                    soil: SoilState::new(g.initial_moisture, SimTime::ZERO),
                    valve_open: false,
                    open_millis: 0,
                })
                .collect(),
            index: config.greenhouses.iter().enumerate().map(|(i, g)| (g.id, i)).collect(),
            noise: topo
                .mote_greenhouse
                .keys()
                .map(|&m| (m, entity_rng(seed, StreamKind::SensorNoise, m.0)))
                .collect(),
            uplink: topo
                .mote_greenhouse
                .keys()
                .map(|&m| (m, entity_rng(seed, StreamKind::Uplink, m.0)))
                .collect(),
            downlink: topo
                .actuator_greenhouse
                .keys()
                .map(|&a| (a, entity_rng(seed, StreamKind::Downlink, a.0)))
                .collect(),
            next_msg: 0,
            topo,
            config,
        };
        for g in &sim.config.greenhouses {
            sim.queue.schedule(SimTime::ZERO, EventKind::PhysicsTick(g.id));
            if g.strategy.schedule().is_some() {
                sim.queue.schedule(SimTime::ZERO, EventKind::ScheduleDue(g.id));
            }
        }
        for g in &sim.config.greenhouses {
            for &m in &g.motes {
                sim.queue.schedule(SimTime::ZERO, EventKind::SampleDue(m));
            }
        }
        Ok(sim)
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn now(&self) -> SimTime {
        self.queue.now()
    }

    pub fn log(&self) -> &RunLog {
        &self.log
    }

    pub fn true_moisture(&self, greenhouse: GreenhouseId) -> Option<f64> {
        self.index.get(&greenhouse).map(|&i| self.greenhouses[i].soil.moisture)
    }

    pub fn valve_open(&self, greenhouse: GreenhouseId) -> Option<bool> {
        self.index.get(&greenhouse).map(|&i| self.greenhouses[i].valve_open)
    }

    /// True once every event up to the scenario duration has been handled.
    pub fn is_done(&self) -> bool {
        self.queue.peek_time().is_none_or(|t| t > self.config.duration_time())
    }

    /// Processes every event firing at or before `until` (capped at the
    /// scenario duration).
    pub fn step_until(&mut self, until: SimTime, hooks: &mut dyn EdgeHooks) {
        let until = until.min(self.config.duration_time());
        while self.queue.peek_time().is_some_and(|t| t <= until) {
            let ev = self.queue.pop().expect("peeked");
            self.handle(ev, hooks);
        }
        self.log.egress_count = hooks.egress_count();
    }

    /// Runs to the scenario duration, lets in-flight messages land, and
    /// appends the final per-greenhouse state.
    pub fn finish(mut self, hooks: &mut dyn EdgeHooks) -> RunLog {
        self.step_until(self.config.duration_time(), hooks);
        while let Some(ev) = self.queue.pop() {
            self.handle(ev, hooks);
        }
        let end = self.queue.now().max(self.config.duration_time());
        for i in 0..self.greenhouses.len() {
            self.advance(i, end);
            let g = &self.greenhouses[i];
            let open_hours = g.open_millis as f64 / 3_600_000.0;
            let event = LogEvent::Final {
                entity: g.id,
                moisture: g.soil.moisture,
                valve_open: g.valve_open,
                open_hours,
                liters: self.config.greenhouses[i].flow_rate * open_hours,
            };
            self.log.push(end, event);
        }
        self.log.egress_count = hooks.egress_count();
        self.log
    }

    fn handle(&mut self, ev: SimEvent, hooks: &mut dyn EdgeHooks) {
        let now = ev.fire_at;
        match ev.kind {
            EventKind::SampleDue(mote) => self.sample(mote, now),
            EventKind::MsgArrival(msg) => self.arrive(msg, now, hooks),
            EventKind::ValveApply { actuator, action, origin } => {
                let gh = self.topo.actuator_greenhouse[&actuator];
                let i = self.index[&gh];
                self.advance(i, now);
                let open = action == ValveAction::Open;
                let changed = self.greenhouses[i].valve_open != open;
                self.greenhouses[i].valve_open = open;
                self.log.push(
                    now,
                    LogEvent::ValveApplied {
                        entity: actuator,
                        greenhouse: gh,
                        action,
                        origin,
                        changed,
                    },
                );
            }
            EventKind::PhysicsTick(gh) => {
                let i = self.index[&gh];
                self.advance(i, now);
                let g = &self.greenhouses[i];
                self.log.push(
                    now,
                    LogEvent::Truth {
                        entity: gh,
                        moisture: g.soil.moisture,
                        valve_open: g.valve_open,
                    },
                );
                let next = now + SimTime::from_secs(self.config.physics_tick);
                if next <= self.config.duration_time() {
                    self.queue.schedule(next, EventKind::PhysicsTick(gh));
                }
            }
            EventKind::ScheduleDue(gh) => self.run_schedule(gh, now),
        }
        let pending = hooks.on_clock(now);
        self.dispatch(pending, Trigger::Operator, now);
    }

    fn sample(&mut self, mote: MoteId, now: SimTime) {
        let gh = self.topo.mote_greenhouse[&mote];
        let i = self.index[&gh];
        self.advance(i, now);
        let rng = self.noise.get_mut(&mote).expect("noise stream per mote");
        let sample = sample_mote(mote, gh, self.greenhouses[i].soil.moisture, rng, now);
        let id = self.fresh_msg_id();
        self.log.push(
            now,
            LogEvent::SampleEmitted {
                entity: mote,
                greenhouse: gh,
                msg: id,
                moisture: sample.moisture,
            },
        );
        let gateway = self.topo.mote_gateway[&mote];
        self.send(Message::uplink(id, sample, gateway), now);
        let next = now + SimTime::from_secs(self.config.sampling_period);
        if next < self.config.duration_time() {
            self.queue.schedule(next, EventKind::SampleDue(mote));
        }
    }

    fn arrive(&mut self, mut msg: Message, now: SimTime, hooks: &mut dyn EdgeHooks) {
        if !msg.is_last_hop() {
            self.log.push(
                now,
                LogEvent::Relayed {
                    entity: msg.id,
                    class: class_of(&msg),
                    hop: msg.hop,
                },
            );
            msg.hop += 1;
            self.send(msg, now);
            return;
        }
        match msg.payload {
            Payload::Sample(sample) => {
                self.log.push(
                    now,
                    LogEvent::EdgeReceived {
                        entity: sample.mote,
                        greenhouse: sample.greenhouse,
                        msg: msg.id,
                        moisture: sample.moisture,
                        sampled_at: sample.sampled_at,
                    },
                );
                let commands = hooks.on_sample(sample, now);
                self.dispatch(commands, Trigger::Sample, now);
            }
            Payload::Command(cmd) => {
                self.log.push(
                    now,
                    LogEvent::CommandDelivered {
                        entity: cmd.target,
                        msg: msg.id,
                    },
                );
                self.queue.schedule(
                    now,
                    EventKind::ValveApply {
                        actuator: cmd.target,
                        action: cmd.action,
                        origin: cmd.origin,
                    },
                );
            }
        }
    }

    fn dispatch(&mut self, commands: Vec<ValveCommand>, trigger: Trigger, now: SimTime) {
        for cmd in commands {
            let Some(&gh) = self.topo.actuator_greenhouse.get(&cmd.target) else {
                debug_assert!(false, "edge addressed unknown actuator {}", cmd.target);
                continue;
            };
            let id = self.fresh_msg_id();
            self.log.push(
                now,
                LogEvent::CommandIssued {
                    entity: cmd.target,
                    greenhouse: gh,
                    msg: Some(id),
                    action: cmd.action,
                    origin: cmd.origin,
                    trigger,
                },
            );
            let gateway = self.topo.actuator_gateway[&cmd.target];
            self.send(Message::downlink(id, cmd, gateway), now);
        }
    }

    fn run_schedule(&mut self, gh: GreenhouseId, now: SimTime) {
        let i = self.index[&gh];
        let cfg = &self.config.greenhouses[i];
        let schedule = *cfg.strategy.schedule().expect("schedule event only for scheduled greenhouses");
        let actuator = cfg.actuator;
        let actual = if self.greenhouses[i].valve_open {
            BelievedValve::Open
        } else {
            BelievedValve::Closed
        };
        if let Some(cmd) = evaluate_timed(&schedule, now, actual, actuator) {
            self.log.push(
                now,
                LogEvent::CommandIssued {
                    entity: actuator,
                    greenhouse: gh,
                    msg: None,
                    action: cmd.action,
                    origin: cmd.origin,
                    trigger: Trigger::Schedule,
                },
            );
            self.queue.schedule(
                now,
                EventKind::ValveApply {
                    actuator,
                    action: cmd.action,
                    origin: cmd.origin,
                },
            );
        }
        let next = schedule.next_transition_after(now);
        if next < self.config.duration_time() {
            self.queue.schedule(next, EventKind::ScheduleDue(gh));
        }
    }

    fn send(&mut self, msg: Message, now: SimTime) {
        let (link, rng) = match msg.payload {
            Payload::Sample(s) => (&self.config.links.uplink, self.uplink.get_mut(&s.mote)),
            Payload::Command(c) => (&self.config.links.downlink, self.downlink.get_mut(&c.target)),
        };
        let rng = rng.expect("link stream per endpoint");
        match draw_hop(link, rng, now) {
            HopOutcome::Arrives(at) => self.queue.schedule(at, EventKind::MsgArrival(msg)),
            HopOutcome::Dropped => self.log.push(
                now,
                LogEvent::Dropped {
                    entity: msg.id,
                    class: class_of(&msg),
                    hop: msg.hop,
                },
            ),
        }
    }

    fn fresh_msg_id(&mut self) -> u64 {
        self.next_msg += 1;
        self.next_msg
    }

    /// Integrates greenhouse `i` up to `until`, splitting at day/night
    /// boundaries so each segment sees a single uptake rate.
    fn advance(&mut self, i: usize, until: SimTime) {
        let cfg = &self.config.greenhouses[i];
        let ambient = &self.config.ambient;
        let g = &mut self.greenhouses[i];
        while g.soil.last_update < until {
            let t = g.soil.last_update;
            let seg_end = next_ambient_boundary(ambient, t).min(until);
            let millis = (seg_end - t).as_millis();
            let conditions = ambient.conditions_at(t);
            g.soil = soil::advance(
                g.soil,
                g.valve_open,
                &conditions,
                &cfg.plant,
                &cfg.soil,
                millis as f64 / 1000.0,
            );
            g.soil.last_update = seg_end;
            if g.valve_open {
                g.open_millis += millis;
            }
        }
    }
}

fn class_of(msg: &Message) -> MessageClass {
    match msg.payload {
        Payload::Sample(_) => MessageClass::Sample,
        Payload::Command(_) => MessageClass::Command,
    }
}

fn next_ambient_boundary(ambient: &crate::scenario::AmbientCycle, t: SimTime) -> SimTime {
    const DAY_MS: u64 = 86_400_000;
    let ms = t.as_millis();
    let midnight = ms - ms % DAY_MS;
    let sod = ms % DAY_MS;
    let next = [ambient.day_start * 1000, ambient.day_end * 1000, DAY_MS + ambient.day_start * 1000]
        .into_iter()
        .find(|&b| b > sod)
        .expect("day_start + one day always lies ahead");
    SimTime::from_millis(midnight + next)
}

/// Runs `config` to completion against `hooks`.
pub fn run(config: &ScenarioConfig, hooks: &mut dyn EdgeHooks) -> Result<RunLog, SimError> {
    let sim = Simulation::new(config.clone())?;
    Ok(sim.finish(hooks))
}
