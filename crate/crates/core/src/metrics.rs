//! Evaluation quantities computed from a run log: moisture stability,
//! time in band, valve-open hours, water volume, and comparison of two
//! greenhouses.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Serialize;

use crate::domain::{GreenhouseId, SimTime};
use crate::netsim::{LogEvent, RunLog};
use crate::scenario::ScenarioConfig;

pub const DEFAULT_WARM_UP_SECS: u64 = 6 * 3600;

pub const CSV_HEADER: &str = "greenhouse,mean,stddev,amplitude,time_in_band,valve_open_hours,water_liters,commands,drops";

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("warm-up {warm_up} must be shorter than the window end {end}")]
    WarmUpTooLong { warm_up: SimTime, end: SimTime },
    #[error("run log does not match scenario: {0}")]
    LogMismatch(String),
    #[error("summaries cover different windows: [{0}, {1}] vs [{2}, {3}]")]
    WindowMismatch(SimTime, SimTime, SimTime, SimTime),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryOptions {
    pub warm_up: SimTime,
    /// Widening applied to both band edges for time-in-band.
    pub band_tolerance: f64,
    /// Use samples received at the edge instead of true soil state.
    pub from_samples: bool,
}

impl Default for SummaryOptions {
    fn default() -> Self {
        SummaryOptions {
            warm_up: SimTime::from_secs(DEFAULT_WARM_UP_SECS),
            band_tolerance: 0.0,
            from_samples: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GreenhouseSummary {
    pub greenhouse: GreenhouseId,
    pub strategy: String,
    pub window_start: SimTime,
    pub window_end: SimTime,
    pub mean: f64,
    pub stddev: f64,
    /// max - min over the window.
    pub amplitude: f64,
    pub time_in_band: f64,
    pub valve_open_hours: f64,
    pub water_liters: f64,
    pub command_count: u64,
    pub drop_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub greenhouses: Vec<GreenhouseSummary>,
}

impl RunSummary {
    pub fn greenhouse(&self, id: GreenhouseId) -> Option<&GreenhouseSummary> {
        self.greenhouses.iter().find(|g| g.greenhouse == id)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(CSV_HEADER);
        out.push('\n');
        for g in &self.greenhouses {
            let _ = writeln!(
                out,
                "{},{:.4},{:.4},{:.4},{:.4},{:.4},{:.4},{},{}",
                g.greenhouse.0,
                g.mean,
                g.stddev,
                g.amplitude,
                g.time_in_band,
                g.valve_open_hours,
                g.water_liters,
                g.command_count,
                g.drop_count
            );
        }
        out
    }

    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        for g in &self.greenhouses {
            let p = g.greenhouse;
            let _ = writeln!(out, "{p}.strategy = {}", g.strategy);
            let _ = writeln!(out, "{p}.window = {}..{}", g.window_start, g.window_end);
            let _ = writeln!(out, "{p}.mean = {:.4}", g.mean);
            let _ = writeln!(out, "{p}.stddev = {:.4}", g.stddev);
            let _ = writeln!(out, "{p}.amplitude = {:.4}", g.amplitude);
            let _ = writeln!(out, "{p}.time_in_band = {:.4}", g.time_in_band);
            let _ = writeln!(out, "{p}.valve_open_hours = {:.4}", g.valve_open_hours);
            let _ = writeln!(out, "{p}.water_liters = {:.4}", g.water_liters);
            let _ = writeln!(out, "{p}.commands = {}", g.command_count);
            let _ = writeln!(out, "{p}.drops = {}", g.drop_count);
        }
        out
    }
}

pub fn summarize(log: &RunLog, config: &ScenarioConfig, warm_up: SimTime) -> Result<RunSummary, MetricsError> {
    summarize_with(
        log,
        config,
        &SummaryOptions {
            warm_up,
            ..SummaryOptions::default()
        },
    )
}

pub fn summarize_with(log: &RunLog, config: &ScenarioConfig, opts: &SummaryOptions) -> Result<RunSummary, MetricsError> {
    summarize_window(log, config, opts, config.duration_time())
}

/// Statistics over `[opts.warm_up, end]`.
pub fn summarize_window(
    log: &RunLog,
    config: &ScenarioConfig,
    opts: &SummaryOptions,
    end: SimTime,
) -> Result<RunSummary, MetricsError> {
    let start = opts.warm_up;
    if start >= end {
        return Err(MetricsError::WarmUpTooLong { warm_up: start, end });
    }
    let mut traces: BTreeMap<GreenhouseId, Vec<f64>> = BTreeMap::new();
    let mut commands: BTreeMap<GreenhouseId, u64> = BTreeMap::new();
    let mut drops: BTreeMap<GreenhouseId, u64> = BTreeMap::new();
    let mut msg_owner: BTreeMap<u64, GreenhouseId> = BTreeMap::new();
    let in_window = |t: SimTime| t >= start && t <= end;

    for r in log.iter() {
        match &r.event {
            LogEvent::SampleEmitted { greenhouse, msg, .. } => {
                msg_owner.insert(*msg, *greenhouse);
            }
            LogEvent::CommandIssued { greenhouse, msg, .. } => {
                if let Some(id) = msg {
                    msg_owner.insert(*id, *greenhouse);
                }
                if in_window(r.t) {
                    *commands.entry(*greenhouse).or_default() += 1;
                }
            }
            LogEvent::Dropped { entity, .. } if in_window(r.t) => {
                let owner = msg_owner
                    .get(entity)
                    .ok_or_else(|| MetricsError::LogMismatch(format!("drop of unknown message {entity}")))?;
                *drops.entry(*owner).or_default() += 1;
            }
            LogEvent::Truth { entity, moisture, .. } if !opts.from_samples && in_window(r.t) => {
                traces.entry(*entity).or_default().push(*moisture);
            }
            LogEvent::EdgeReceived {
                greenhouse,
                moisture,
                sampled_at,
                ..
            } if opts.from_samples && in_window(*sampled_at) => {
                traces.entry(*greenhouse).or_default().push(*moisture);
            }
            _ => {}
        }
    }
    if let Some(g) = traces.keys().find(|g| config.greenhouse(**g).is_none()) {
        return Err(MetricsError::LogMismatch(format!("log mentions {g}, absent from scenario")));
    }

    let mut greenhouses = Vec::with_capacity(config.greenhouses.len());
    for gh in &config.greenhouses {
        let trace = traces.remove(&gh.id).unwrap_or_default();
        if trace.is_empty() && !opts.from_samples {
            return Err(MetricsError::LogMismatch(format!("no soil snapshots for {} in window", gh.id)));
        }
        let band = gh.band(config.reference_band);
        let stats = TraceStats::of(&trace);
        let in_band = trace.iter().filter(|&&m| band.contains(m, opts.band_tolerance)).count();
        let hours = valve_open_hours(log, gh.id, start, end);
        greenhouses.push(GreenhouseSummary {
            greenhouse: gh.id,
            strategy: gh.strategy.kind().to_string(),
            window_start: start,
            window_end: end,
            mean: stats.mean,
            stddev: stats.stddev,
            amplitude: stats.amplitude,
            time_in_band: if trace.is_empty() {
                0.0
            } else {
                in_band as f64 / trace.len() as f64
            },
            valve_open_hours: hours,
            water_liters: gh.flow_rate * hours,
            command_count: commands.get(&gh.id).copied().unwrap_or(0),
            drop_count: drops.get(&gh.id).copied().unwrap_or(0),
        });
    }
    Ok(RunSummary { greenhouses })
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct TraceStats {
    mean: f64,
    stddev: f64,
    amplitude: f64,
}

impl TraceStats {
    fn of(xs: &[f64]) -> Self {
        if xs.is_empty() {
            return Self::default();
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let (lo, hi) = xs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
        TraceStats {
            mean,
            stddev: var.sqrt(),
            amplitude: hi - lo,
        }
    }
}

/// Open intervals of `greenhouse`'s valve as applied at the actuator.
/// An interval still open at the end of the log has no close time.
pub fn valve_intervals(log: &RunLog, greenhouse: GreenhouseId) -> Vec<(SimTime, Option<SimTime>)> {
    let mut out = Vec::new();
    let mut open_since = None;
    for r in log.iter() {
        if let LogEvent::ValveApplied {
            greenhouse: g,
            action,
            changed: true,
            ..
        } = &r.event
        {
            if *g != greenhouse {
                continue;
            }
            match (action, open_since) {
                (crate::domain::ValveAction::Open, None) => open_since = Some(r.t),
                (crate::domain::ValveAction::Close, Some(s)) => {
                    out.push((s, Some(r.t)));
                    open_since = None;
                }
                _ => {}
            }
        }
    }
    if let Some(s) = open_since {
        out.push((s, None));
    }
    out
}

/// Hours the valve was open within `[from, to]`.
pub fn valve_open_hours(log: &RunLog, greenhouse: GreenhouseId, from: SimTime, to: SimTime) -> f64 {
    let millis: u64 = valve_intervals(log, greenhouse)
        .into_iter()
        .map(|(s, e)| {
            let s = s.max(from);
            let e = e.unwrap_or(to).min(to);
            if e > s {
                (e - s).as_millis()
            } else {
                0
            }
        })
        .sum();
    millis as f64 / 3_600_000.0
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FieldComparison {
    pub field: &'static str,
    pub baseline: f64,
    pub candidate: f64,
    /// candidate / baseline; absent when only the baseline is zero.
    pub ratio: Option<f64>,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub baseline: GreenhouseId,
    pub candidate: GreenhouseId,
    pub fields: Vec<FieldComparison>,
    /// 1 - candidate valve hours / baseline valve hours.
    pub water_saving: Option<f64>,
}

impl ComparisonReport {
    pub fn field(&self, name: &str) -> Option<&FieldComparison> {
        self.fields.iter().find(|f| f.field == name)
    }

    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "baseline = {}", self.baseline);
        let _ = writeln!(out, "candidate = {}", self.candidate);
        for f in &self.fields {
            let ratio = f.ratio.map_or_else(|| "undefined".to_string(), |r| format!("{r:.4}"));
            let _ = writeln!(
                out,
                "{}: baseline = {:.4}, candidate = {:.4}, ratio = {ratio}, delta = {:.4}",
                f.field, f.baseline, f.candidate, f.delta
            );
        }
        let saving = self.water_saving.map_or_else(|| "undefined".to_string(), |s| format!("{s:.4}"));
        let _ = writeln!(out, "water_saving = {saving}");
        out
    }
}

pub fn compare(baseline: &GreenhouseSummary, candidate: &GreenhouseSummary) -> Result<ComparisonReport, MetricsError> {
    if (baseline.window_start, baseline.window_end) != (candidate.window_start, candidate.window_end) {
        return Err(MetricsError::WindowMismatch(
            baseline.window_start,
            baseline.window_end,
            candidate.window_start,
            candidate.window_end,
        ));
    }
    let field = |name: &'static str, a: f64, b: f64| FieldComparison {
        field: name,
        baseline: a,
        candidate: b,
        ratio: if a == b {
            Some(1.0)
        } else if a == 0.0 {
            None
        } else {
            Some(b / a)
        },
        delta: b - a,
    };
    let (a, b) = (baseline, candidate);
    let fields = vec![
        field("mean", a.mean, b.mean),
        field("stddev", a.stddev, b.stddev),
        field("amplitude", a.amplitude, b.amplitude),
        field("time_in_band", a.time_in_band, b.time_in_band),
        field("valve_open_hours", a.valve_open_hours, b.valve_open_hours),
        field("water_liters", a.water_liters, b.water_liters),
        field("commands", a.command_count as f64, b.command_count as f64),
        field("drops", a.drop_count as f64, b.drop_count as f64),
    ];
    let water_saving = (a.valve_open_hours > 0.0).then(|| 1.0 - b.valve_open_hours / a.valve_open_hours);
    Ok(ComparisonReport {
        baseline: a.greenhouse,
        candidate: b.greenhouse,
        fields,
        water_saving,
    })
}
