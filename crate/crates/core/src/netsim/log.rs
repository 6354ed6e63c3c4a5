//! Run log: one record per simulation event, serialized as JSON lines.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::domain::{ActuatorId, CommandOrigin, GreenhouseId, MoteId, SimTime, ValveAction};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageClass {
    Sample,
    Command,
}

/// What caused a command to be issued.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Trigger {
    /// A sample arrived at the edge node.
    Sample,
    /// A valve-side programmer or farmer schedule.
    Schedule,
    /// An operator request (manual valve, mode switch).
    Operator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LogEvent {
    SampleEmitted {
        entity: MoteId,
        greenhouse: GreenhouseId,
        msg: u64,
        moisture: f64,
    },
    Relayed {
        entity: u64,
        class: MessageClass,
        hop: usize,
    },
    Dropped {
        entity: u64,
        class: MessageClass,
        hop: usize,
    },
    EdgeReceived {
        entity: MoteId,
        greenhouse: GreenhouseId,
        msg: u64,
        moisture: f64,
        sampled_at: SimTime,
    },
    CommandIssued {
        entity: ActuatorId,
        greenhouse: GreenhouseId,
        /// Absent for commands applied at the valve without a radio hop.
        msg: Option<u64>,
        action: ValveAction,
        origin: CommandOrigin,
        trigger: Trigger,
    },
    CommandDelivered {
        entity: ActuatorId,
        msg: u64,
    },
    ValveApplied {
        entity: ActuatorId,
        greenhouse: GreenhouseId,
        action: ValveAction,
        origin: CommandOrigin,
        /// False when the valve was already in the requested state.
        changed: bool,
    },
    Truth {
        entity: GreenhouseId,
        moisture: f64,
        valve_open: bool,
    },
    Final {
        entity: GreenhouseId,
        moisture: f64,
        valve_open: bool,
        open_hours: f64,
        liters: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub t: SimTime,
    #[serde(flatten)]
    pub event: LogEvent,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct MessageCounts {
    pub emitted: u64,
    pub delivered: u64,
    pub dropped: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunLog {
    pub records: Vec<LogRecord>,
    /// Records the edge node would have sent over a backhaul.
    pub egress_count: u64,
}

impl RunLog {
    pub fn push(&mut self, t: SimTime, event: LogEvent) {
        self.records.push(LogRecord { t, event });
    }

    pub fn iter(&self) -> impl Iterator<Item = &LogRecord> {
        self.records.iter()
    }

    /// Emitted, delivered and dropped counts for messages of `class` that
    /// travelled over the radio network.
    pub fn message_counts(&self, class: MessageClass) -> MessageCounts {
        let mut counts = MessageCounts::default();
        for r in &self.records {
            match (&r.event, class) {
                (LogEvent::SampleEmitted { .. }, MessageClass::Sample) => counts.emitted += 1,
                (LogEvent::EdgeReceived { .. }, MessageClass::Sample) => counts.delivered += 1,
                (LogEvent::CommandIssued { msg: Some(_), .. }, MessageClass::Command) => counts.emitted += 1,
                (LogEvent::CommandDelivered { .. }, MessageClass::Command) => counts.delivered += 1,
                (LogEvent::Dropped { class: c, .. }, _) if *c == class => counts.dropped += 1,
                _ => {}
            }
        }
        counts
    }

    pub fn write_jsonl<W: Write>(&self, mut out: W) -> io::Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut out, r)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }

    pub fn to_jsonl_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_jsonl(&mut buf).expect("writing to a Vec cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_jsonl(text: &str) -> Result<Self, serde_json::Error> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<Result<Vec<LogRecord>, _>>()?;
        Ok(RunLog {
            records,
            egress_count: 0,
        })
    }
}
