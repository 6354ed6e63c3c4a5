mod common;

use common::sim::{assert_isolated, simulate, with_loss};
use proptest::prelude::*;
use sinet_core::controller::{BelievedValve, ControlError, ControlMode};
use sinet_core::edge::{command_origins, EdgeError, EdgeNode, Series, SeriesMetric, StoredRecord, TimeSeriesStore};
use sinet_core::metrics::valve_intervals;
use sinet_core::scenario::{LinkModel, NetworkMode};
use sinet_core::{
    default_scenario, domain::BandError, CommandOrigin, GreenhouseId, MoistureBand, MoistureSample, MoteId, ScenarioConfig,
    SimTime, ValveAction,
};

const GH: GreenhouseId = GreenhouseId(2);

fn sample(mote: u16, moisture: f64, secs: u64) -> MoistureSample {
    MoistureSample {
        mote: MoteId(mote),
        greenhouse: if mote <= 2 { GreenhouseId(1) } else { GH },
        moisture,
        sampled_at: SimTime::from_secs(secs),
    }
}

fn node() -> EdgeNode {
    EdgeNode::in_memory(&default_scenario()).unwrap()
}

fn feed(node: &mut EdgeNode, mote: u16, moisture: f64, secs: u64) -> Vec<ValveAction> {
    node.advance_clock(SimTime::from_secs(secs));
    node.ingest(sample(mote, moisture, secs)).unwrap();
    node.take_outbox().into_iter().map(|c| c.action).collect()
}

fn status_of(node: &EdgeNode, gh: GreenhouseId) -> sinet_core::edge::GreenhouseStatus {
    node.live_status().greenhouses.into_iter().find(|g| g.id == gh).unwrap()
}

fn isolated(node: &EdgeNode) {
    assert_eq!(node.guard().egress_count(), 0);
    assert!(node.guard().is_isolated());
}

#[test]
fn low_sample_with_closed_valve_opens() {
    let mut n = node();
    assert_eq!(feed(&mut n, 3, 56.0, 0), vec![ValveAction::Close]);
    assert_eq!(status_of(&n, GH).valve, BelievedValve::Closed);
    let cmds = n.store().all(GH).filter(|r| matches!(r, StoredRecord::Command { .. })).count();
    assert_eq!(feed(&mut n, 3, 48.0, 60), vec![ValveAction::Open]);
    assert_eq!(n.store().all(GH).filter(|r| matches!(r, StoredRecord::Command { .. })).count(), cmds + 1);
    isolated(&n);
}

#[test]
fn in_band_sample_holds_and_is_persisted() {
    let mut n = node();
    feed(&mut n, 3, 48.0, 0);
    let before = n.store().len();
    assert!(feed(&mut n, 3, 52.0, 60).is_empty());
    assert_eq!(n.store().len(), before + 1);
    isolated(&n);
}

#[test]
fn unknown_mote_is_quarantined() {
    let mut n = node();
    n.ingest(MoistureSample {
        mote: MoteId(99),
        greenhouse: GH,
        moisture: 10.0,
        sampled_at: SimTime::ZERO,
    })
    .unwrap();
    // A known mote claiming the wrong greenhouse is quarantined too.
    n.ingest(MoistureSample {
        mote: MoteId(1),
        greenhouse: GH,
        moisture: 10.0,
        sampled_at: SimTime::ZERO,
    })
    .unwrap();
    assert!(n.take_outbox().is_empty());
    assert_eq!(n.store().quarantined().len(), 2);
    assert_eq!(n.live_status().quarantined, 2);
    assert_eq!(status_of(&n, GH).samples, 0);
    isolated(&n);
}

#[test]
fn baseline_greenhouse_samples_are_stored_not_acted_on() {
    let mut n = node();
    assert!(feed(&mut n, 1, 10.0, 0).is_empty());
    assert_eq!(status_of(&n, GreenhouseId(1)).samples, 1);
}

#[test]
fn band_changes_are_validated_and_audited() {
    let mut n = node();
    assert!(matches!(
        n.set_band(GH, MoistureBand { low_lim: 55.0, upper_lim: 50.0 }),
        Err(EdgeError::Band(BandError::Inverted))
    ));
    assert!(n.set_band(GreenhouseId(9), MoistureBand::default()).is_err());
    assert!(n.audit_log(GH).is_empty());

    n.set_band(GH, MoistureBand::new(40.0, 45.0).unwrap()).unwrap();
    assert!(feed(&mut n, 3, 48.0, 0).contains(&ValveAction::Close));
    n.set_band(GH, MoistureBand::new(50.0, 55.0).unwrap()).unwrap();
    assert_eq!(feed(&mut n, 3, 48.0, 60), vec![ValveAction::Open]);
    n.advance_clock(SimTime::from_secs(120));
    n.set_band(GH, MoistureBand::new(51.0, 56.0).unwrap()).unwrap();

    let audit = n.audit_log(GH);
    assert_eq!(audit.len(), 3);
    match &audit[2] {
        StoredRecord::BandChange { at, band, operator, .. } => {
            assert_eq!(*at, SimTime::from_secs(120));
            assert_eq!(band.low_lim, 51.0);
            assert_eq!(operator, sinet_core::edge::OPERATOR);
        }
        other => panic!("unexpected {other:?}"),
    }
    assert_eq!(status_of(&n, GH).band.upper_lim, 56.0);
}

#[test]
fn manual_mode_suppresses_auto_commands() {
    let mut n = node();
    n.set_mode(GH, ControlMode::Manual).unwrap();
    assert!(feed(&mut n, 3, 30.0, 0).is_empty());
    assert_eq!(status_of(&n, GH).mode, ControlMode::Manual);
}

#[test]
fn returning_to_auto_evaluates_immediately() {
    let mut n = node();
    n.set_mode(GH, ControlMode::Manual).unwrap();
    feed(&mut n, 3, 45.0, 0);
    // Sample is now older than the staleness limit; it is still used.
    n.advance_clock(SimTime::from_secs(3600));
    n.set_mode(GH, ControlMode::Auto).unwrap();
    let out = n.take_outbox();
    assert_eq!(out.len(), 1);
    assert_eq!(out[0].action, ValveAction::Open);
    assert_eq!(out[0].origin, CommandOrigin::AutoController);
    assert!(status_of(&n, GH).aggregate.unwrap().stale);
}

#[test]
fn redundant_mode_change_is_a_no_op() {
    let mut n = node();
    feed(&mut n, 3, 45.0, 0);
    n.take_outbox();
    let records = n.store().len();
    n.set_mode(GH, ControlMode::Auto).unwrap();
    assert_eq!(n.store().len(), records);
    assert!(n.take_outbox().is_empty());
    assert!(n.set_mode(GreenhouseId(9), ControlMode::Manual).is_err());
}

#[test]
fn manual_valve_requires_manual_mode_and_reasserts() {
    let mut n = node();
    assert!(matches!(
        n.manual_valve(GH, ValveAction::Open),
        Err(EdgeError::Control(ControlError::ModeConflict(GH)))
    ));
    n.set_mode(GH, ControlMode::Manual).unwrap();
    n.manual_valve(GH, ValveAction::Open).unwrap();
    n.manual_valve(GH, ValveAction::Open).unwrap();
    let out = n.take_outbox();
    assert_eq!(out.len(), 2);
    assert!(out.iter().all(|c| c.origin == CommandOrigin::ManualOperator && c.action == ValveAction::Open));
    assert_eq!(status_of(&n, GH).valve, BelievedValve::Open);
    let Series::Commands(cmds) = n.query_series(GH, SimTime::ZERO, SimTime::ZERO, SeriesMetric::Commands).unwrap() else {
        panic!("commands series")
    };
    assert_eq!(cmds.len(), 2);
}

#[test]
fn query_series_ranges() {
    let mut n = node();
    for k in 0..10 {
        feed(&mut n, 3, 52.0, k * 60);
    }
    let all = n.query_series(GH, SimTime::ZERO, SimTime::from_secs(540), SeriesMetric::Moisture).unwrap();
    assert_eq!(all.len(), 10);
    let inner = n
        .query_series(GH, SimTime::from_secs(61), SimTime::from_secs(119), SeriesMetric::Moisture)
        .unwrap();
    assert!(inner.is_empty());
    assert!(matches!(
        n.query_series(GH, SimTime::from_secs(10), SimTime::from_secs(5), SeriesMetric::Moisture),
        Err(EdgeError::InvertedRange { .. })
    ));
    assert!(matches!(
        n.query_series(GreenhouseId(9), SimTime::ZERO, SimTime::ZERO, SeriesMetric::Moisture),
        Err(EdgeError::UnknownGreenhouse(_))
    ));
}

#[test]
fn live_status_tracks_samples_and_belief() {
    let mut n = node();
    let before = status_of(&n, GH);
    assert_eq!(before.aggregate, None);
    assert_eq!(before.valve, BelievedValve::Unknown);
    assert_eq!(before.strategy, "hysteresis");

    feed(&mut n, 3, 52.5, 60);
    let after = status_of(&n, GH);
    assert_eq!(after.aggregate.unwrap().value, 52.5);
    assert_eq!(after.samples, 1);
    assert_eq!(after.last_sample_at, Some(SimTime::from_secs(60)));

    feed(&mut n, 4, 60.0, 120);
    assert_eq!(status_of(&n, GH).valve, BelievedValve::Closed);
    let snap = n.live_status();
    assert_eq!(snap.at, SimTime::from_secs(120));
    assert_eq!(snap.network_mode, NetworkMode::EdgeOnly);
    assert_eq!(snap.greenhouses.len(), 2);
}

#[test]
fn lost_close_is_reasserted_once_moisture_keeps_rising() {
    let mut n = node();
    assert_eq!(feed(&mut n, 3, 56.0, 0), vec![ValveAction::Close]);
    assert!(feed(&mut n, 3, 57.5, 60).is_empty());
    assert!(feed(&mut n, 3, 58.0, 120).is_empty());
    assert_eq!(feed(&mut n, 3, 58.1, 180), vec![ValveAction::Close]);
    assert!(feed(&mut n, 3, 58.2, 240).is_empty());

    let mut cfg = default_scenario();
    cfg.control.reassert_margin = None;
    let mut strict = EdgeNode::in_memory(&cfg).unwrap();
    assert_eq!(feed(&mut strict, 3, 56.0, 0), vec![ValveAction::Close]);
    for (k, m) in [58.1, 70.0, 90.0].into_iter().enumerate() {
        assert!(feed(&mut strict, 3, m, 60 * (k as u64 + 1)).is_empty());
    }
}

#[test]
fn store_survives_a_restart() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("edge.jsonl");
    let cfg = default_scenario();
    {
        let mut n = EdgeNode::new(&cfg, TimeSeriesStore::open(&path).unwrap()).unwrap();
        feed(&mut n, 3, 48.0, 0);
        feed(&mut n, 4, 49.0, 60);
        n.set_mode(GH, ControlMode::Manual).unwrap();
        n.manual_valve(GH, ValveAction::Close).unwrap();
        isolated(&n);
    }
    let reopened = EdgeNode::new(&cfg, TimeSeriesStore::open(&path).unwrap()).unwrap();
    let to = SimTime::from_secs(3600);
    assert_eq!(reopened.query_series(GH, SimTime::ZERO, to, SeriesMetric::Moisture).unwrap().len(), 2);
    let Series::Commands(cmds) = reopened.query_series(GH, SimTime::ZERO, to, SeriesMetric::Commands).unwrap() else {
        panic!("commands series")
    };
    assert_eq!(
        cmds.iter().map(|c| (c.action, c.origin)).collect::<Vec<_>>(),
        vec![
            (ValveAction::Open, CommandOrigin::AutoController),
            (ValveAction::Close, CommandOrigin::ManualOperator)
        ]
    );
    assert_eq!(reopened.audit_log(GH).len(), 1);
}

fn instant(cfg: &mut ScenarioConfig) {
    cfg.links.uplink = LinkModel::LOSSLESS_INSTANT;
    cfg.links.downlink = LinkModel::LOSSLESS_INSTANT;
}

#[test]
fn simulated_run_is_fully_retrievable() {
    let mut cfg = default_scenario();
    instant(&mut cfg);
    let (log, node) = simulate(&cfg);
    let end = cfg.duration_time();
    for gh in [GreenhouseId(1), GH] {
        let received = log
            .iter()
            .filter(|r| matches!(r.event, sinet_core::netsim::LogEvent::EdgeReceived { greenhouse, .. } if greenhouse == gh))
            .count();
        assert_eq!(node.query_series(gh, SimTime::ZERO, end, SeriesMetric::Moisture).unwrap().len(), received);
    }
    let Series::Valve(edge_view) = node.query_series(GH, SimTime::ZERO, end, SeriesMetric::Valve).unwrap() else {
        panic!("valve series")
    };
    let applied: Vec<_> = valve_intervals(&log, GH)
        .into_iter()
        .map(|(s, e)| (s, e.map(|e| e.min(end))))
        .collect();
    let believed: Vec<_> = edge_view.iter().map(|v| (v.opened_at, v.closed_at)).collect();
    assert!(!applied.is_empty());
    assert_eq!(believed, applied);
}

#[test]
fn backhaul_mode_counts_every_persisted_record() {
    let mut cfg = with_loss(0.05);
    cfg.mode = NetworkMode::WithBackhaul;
    cfg.duration = 86_400;
    let (log, node) = simulate(&cfg);
    assert_eq!(node.guard().egress_count(), node.store().len());
    assert_eq!(log.egress_count, node.store().len());
    assert!(!node.guard().is_isolated());

    cfg.mode = NetworkMode::EdgeOnly;
    let (log, node) = simulate(&cfg);
    assert_isolated(&log, &node);
}

#[derive(Debug, Clone)]
enum Op {
    Sample(f64),
    Mode(bool),
    Valve(bool),
    Wait(u64),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (30.0f64..70.0).prop_map(Op::Sample),
        1 => any::<bool>().prop_map(Op::Mode),
        1 => any::<bool>().prop_map(Op::Valve),
        2 => (1u64..600).prop_map(Op::Wait),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn no_auto_command_inside_manual_interval(ops in prop::collection::vec(op(), 1..80)) {
        let mut n = node();
        let mut now = 0u64;
        for op in ops {
            match op {
                Op::Sample(m) => {
                    n.ingest(sample(3, m, now)).unwrap();
                }
                Op::Mode(manual) => {
                    n.set_mode(GH, if manual { ControlMode::Manual } else { ControlMode::Auto }).unwrap();
                }
                Op::Valve(open) => {
                    let action = if open { ValveAction::Open } else { ValveAction::Close };
                    let res = n.manual_valve(GH, action);
                    prop_assert_eq!(res.is_ok(), status_of(&n, GH).mode == ControlMode::Manual);
                }
                Op::Wait(s) => {
                    now += s;
                    n.advance_clock(SimTime::from_secs(now));
                }
            }
        }
        // Manual intervals from the audit trail: [switch to Manual, switch to Auto).
        let mut manual: Vec<(SimTime, Option<SimTime>)> = Vec::new();
        for rec in n.audit_log(GH) {
            if let StoredRecord::ModeChange { at, mode, .. } = rec {
                match mode {
                    ControlMode::Manual => manual.push((at, None)),
                    ControlMode::Auto => manual.last_mut().unwrap().1 = Some(at),
                }
            }
        }
        // Records are ordered by timestamp then insertion, so a command at a
        // switch instant is attributed by its position relative to the switch.
        let mut in_manual = false;
        for rec in n.store().all(GH) {
            match rec {
                StoredRecord::ModeChange { mode, .. } => in_manual = *mode == ControlMode::Manual,
                StoredRecord::Command { command, .. } => {
                    prop_assert!(!(in_manual && command.origin == CommandOrigin::AutoController));
                    prop_assert!(in_manual || command.origin == CommandOrigin::AutoController);
                }
                _ => {}
            }
        }
        for (at, origin) in command_origins(n.store(), GH) {
            if origin == CommandOrigin::AutoController {
                prop_assert!(!manual.iter().any(|&(s, e)| at > s && e.is_none_or(|e| at < e)));
            }
        }
        isolated(&n);
    }
}
