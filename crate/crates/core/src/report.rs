//! Per-greenhouse time series for plotting, rebuilt from a run log.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::controller::aggregate;
use crate::domain::{GreenhouseId, MoistureSample, MoteId, SimTime};
use crate::netsim::{LogEvent, RunLog};
use crate::scenario::ScenarioConfig;

pub const SERIES_HEADER: &str = "t,true_moisture,aggregate,valve,command_events";

#[derive(Debug, Clone, PartialEq)]
pub struct SeriesRow {
    pub t: SimTime,
    pub true_moisture: f64,
    /// Edge estimate at `t`; absent before the first sample arrives.
    pub aggregate: Option<f64>,
    pub valve_open: bool,
    /// Commands issued for the greenhouse since the previous row.
    pub command_events: u32,
}

/// One row per physics tick of `greenhouse`.
pub fn series_rows(log: &RunLog, config: &ScenarioConfig, greenhouse: GreenhouseId) -> Vec<SeriesRow> {
    let staleness = SimTime::from_secs(config.control.staleness_limit);
    let mut latest: BTreeMap<MoteId, MoistureSample> = BTreeMap::new();
    let mut pending_commands = 0;
    let mut rows = Vec::new();
    for r in log.iter() {
        match &r.event {
            LogEvent::EdgeReceived {
                entity,
                greenhouse: g,
                moisture,
                sampled_at,
                ..
            } if *g == greenhouse => {
                let sample = MoistureSample {
                    mote: *entity,
                    greenhouse,
                    moisture: *moisture,
                    sampled_at: *sampled_at,
                };
                latest
                    .entry(*entity)
                    .and_modify(|s| {
                        if s.sampled_at <= sample.sampled_at {
                            *s = sample;
                        }
                    })
                    .or_insert(sample);
            }
            LogEvent::CommandIssued { greenhouse: g, .. } if *g == greenhouse => pending_commands += 1,
            LogEvent::Truth {
                entity,
                moisture,
                valve_open,
            } if *entity == greenhouse => {
                let samples: Vec<MoistureSample> = latest.values().copied().collect();
                rows.push(SeriesRow {
                    t: r.t,
                    true_moisture: *moisture,
                    aggregate: aggregate(&samples, r.t, staleness).ok().map(|a| a.value),
                    valve_open: *valve_open,
                    command_events: std::mem::take(&mut pending_commands),
                });
            }
            _ => {}
        }
    }
    rows
}

pub fn series_csv(log: &RunLog, config: &ScenarioConfig, greenhouse: GreenhouseId) -> String {
    let mut out = String::from(SERIES_HEADER);
    out.push('\n');
    for row in series_rows(log, config, greenhouse) {
        let agg = row.aggregate.map(|a| format!("{a:.4}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{:.4},{agg},{},{}",
            row.t,
            row.true_moisture,
            u8::from(row.valve_open),
            row.command_events
        );
    }
    out
}
