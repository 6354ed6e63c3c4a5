#![allow(dead_code)]
//! Property checks shared by the property suites and the acceptance target.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestError, TestRunner};

pub const CASES: u32 = 1000;

/// Runs `check` over `CASES` generated inputs with a fixed-seed runner.
pub fn run_cases<S: Strategy>(
    strategy: S,
    check: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> Result<u32, String>
where
    S::Value: std::fmt::Debug,
{
    let mut runner = TestRunner::new_with_rng(
        Config {
            cases: CASES,
            failure_persistence: None,
            ..Config::default()
        },
        proptest::test_runner::TestRng::deterministic_rng(proptest::test_runner::RngAlgorithm::ChaCha),
    );
    match runner.run(&strategy, check) {
        Ok(()) => Ok(CASES),
        Err(TestError::Fail(why, input)) => Err(format!("{why} for {input:?}")),
        Err(TestError::Abort(why)) => Err(format!("aborted: {why}")),
    }
}

pub mod hysteresis {
    use super::*;
    use sinet_core::controller::{evaluate_hysteresis, BelievedValve, ControllerState};
    use sinet_core::{ActuatorId, GreenhouseId, MoistureBand, SimTime, ValveAction};

    pub fn band() -> impl Strategy<Value = MoistureBand> {
        (1.0f64..90.0, 0.1f64..10.0).prop_map(|(low, width)| MoistureBand::new(low, low + width).unwrap())
    }

    pub fn belief() -> impl Strategy<Value = BelievedValve> {
        prop_oneof![Just(BelievedValve::Open), Just(BelievedValve::Closed), Just(BelievedValve::Unknown)]
    }

    fn in_band_fraction() -> impl Strategy<Value = f64> {
        prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0]
    }

    fn state(believed: BelievedValve) -> ControllerState {
        let mut s = ControllerState::new(GreenhouseId(1), ActuatorId(1));
        s.believed_valve = believed;
        s
    }

    /// Feeds `values` through the controller, applying each command to the
    /// believed state, and returns the commands issued.
    pub fn drive(initial: BelievedValve, band: &MoistureBand, values: &[f64]) -> Vec<ValveAction> {
        let mut s = state(initial);
        let mut out = Vec::new();
        for (i, &v) in values.iter().enumerate() {
            if let Some(cmd) = evaluate_hysteresis(&s, band, v, SimTime::from_secs(i as u64 * 60)).unwrap() {
                s.record_issued(&cmd);
                out.push(cmd.action);
            }
        }
        out
    }

    #[derive(Debug, Clone)]
    pub struct CrossingCase {
        pub band: MoistureBand,
        pub initial: BelievedValve,
        pub trajectory: Vec<f64>,
    }

    /// In-band prefix, a descent below `low_lim`, then an optional return
    /// into the band: exactly one downward crossing, no upper crossing.
    pub fn single_crossing() -> impl Strategy<Value = CrossingCase> {
        (
            band(),
            prop_oneof![Just(BelievedValve::Closed), Just(BelievedValve::Unknown)],
            prop::collection::vec(in_band_fraction(), 0..20),
            prop::collection::vec(0.0f64..1.0, 1..30),
            prop::collection::vec(in_band_fraction(), 0..20),
        )
            .prop_map(|(band, initial, before, below, after)| {
                let width = band.upper_lim - band.low_lim;
                let inside = |f: f64| band.low_lim + f * width;
                let mut trajectory: Vec<f64> = before.into_iter().map(inside).collect();
                trajectory.extend(below.into_iter().map(|f| f * band.low_lim));
                trajectory.extend(after.into_iter().map(inside));
                CrossingCase {
                    band,
                    initial,
                    trajectory,
                }
            })
    }

    pub fn check_edge_triggering(case: CrossingCase) -> Result<(), TestCaseError> {
        let cmds = drive(case.initial, &case.band, &case.trajectory);
        prop_assert_eq!(cmds, vec![ValveAction::Open]);
        Ok(())
    }

    pub fn random_walk() -> impl Strategy<Value = (MoistureBand, BelievedValve, Vec<f64>)> {
        (band(), belief(), prop::collection::vec(0.0f64..=100.0, 1..200))
    }

    pub fn check_alternation((band, initial, values): (MoistureBand, BelievedValve, Vec<f64>)) -> Result<(), TestCaseError> {
        let cmds = drive(initial, &band, &values);
        prop_assert!(cmds.windows(2).all(|w| w[0] != w[1]), "{:?}", cmds);
        if let Some(first) = cmds.first() {
            prop_assert_ne!(BelievedValve::from(*first), initial);
        }
        Ok(())
    }

    pub fn check_hold_idempotence(
        (band, initial, value): (MoistureBand, BelievedValve, f64),
    ) -> Result<(), TestCaseError> {
        let cmds = drive(initial, &band, &[value, value]);
        prop_assert!(cmds.len() <= 1, "{:?}", cmds);
        Ok(())
    }

    pub fn check_boundary_strictness(
        (band, initial, upper): (MoistureBand, BelievedValve, bool),
    ) -> Result<(), TestCaseError> {
        let value = if upper { band.upper_lim } else { band.low_lim };
        prop_assert!(drive(initial, &band, &[value]).is_empty());
        Ok(())
    }

    pub fn check_band_scaling(
        (band, initial, f): (MoistureBand, BelievedValve, f64),
    ) -> Result<(), TestCaseError> {
        let value = band.low_lim + f * (band.upper_lim - band.low_lim);
        prop_assume!(value > band.low_lim && value < band.upper_lim);
        prop_assert!(drive(initial, &band, &[value]).is_empty());
        Ok(())
    }
}

pub mod soil {
    use super::*;
    use sinet_core::scenario::Calibration;
    use sinet_core::soil::{self, AmbientConditions, SoilParams, SoilState};
    use sinet_core::{PlantProfile, SimTime};

    pub fn plant() -> impl Strategy<Value = PlantProfile> {
        (0.0f64..2.0, 0.0f64..1.0).prop_map(|(day, night)| PlantProfile {
            name: "p".into(),
            uptake_rate_day: day,
            uptake_rate_night: night,
        })
    }

    pub fn calibrated_plant() -> impl Strategy<Value = PlantProfile> {
        prop::sample::select(vec!["strawberry", "geranium", "lavender", "mint"])
            .prop_map(|n| Calibration::builtin().plant(n).unwrap())
    }

    pub fn params() -> impl Strategy<Value = SoilParams> {
        (0.5f64..12.0, 0.05f64..=1.0, 5.0f64..=100.0).prop_map(|(infil_rate, eta_min, knee)| SoilParams {
            infil_rate,
            eta_min,
            knee,
        })
    }

    pub fn ambient() -> impl Strategy<Value = AmbientConditions> {
        any::<bool>().prop_map(|is_day| AmbientConditions {
            temperature: if is_day { 36.0 } else { 30.0 },
            is_day,
        })
    }

    /// Largest step for which halving stays within 0.05 at calibrated rates.
    pub const HALVING_MAX_STEP: u32 = 1800;

    pub type HalvingCase = (f64, bool, AmbientConditions, PlantProfile, u32);

    pub fn halving_case(max_step: u32) -> impl Strategy<Value = HalvingCase> {
        (0.0f64..=100.0, any::<bool>(), ambient(), calibrated_plant(), 1u32..=max_step)
    }

    pub fn halving_gap((m, open, amb, p, dt): &HalvingCase) -> f64 {
        let s = Calibration::builtin().soil;
        let start = SoilState::new(*m, SimTime::ZERO);
        let dt = f64::from(*dt);
        let whole = soil::step(start, *open, amb, p, &s, dt).unwrap();
        let half = soil::step(start, *open, amb, p, &s, dt / 2.0).unwrap();
        let halves = soil::step(half, *open, amb, p, &s, dt / 2.0).unwrap();
        (whole.moisture - halves.moisture).abs()
    }

    pub fn check_halving(case: HalvingCase) -> Result<(), TestCaseError> {
        let gap = halving_gap(&case);
        prop_assert!(gap <= 0.05, "gap {} for {:?}", gap, case);
        Ok(())
    }

    pub type StateCase = (f64, bool, AmbientConditions, PlantProfile, SoilParams, f64);

    pub fn state_case() -> impl Strategy<Value = StateCase> {
        (0.0f64..=100.0, any::<bool>(), ambient(), plant(), params(), 0.001f64..=3600.0)
    }

    pub fn check_bounded((m, open, amb, p, s, dt): StateCase) -> Result<(), TestCaseError> {
        let next = soil::step(SoilState::new(m, SimTime::ZERO), open, &amb, &p, &s, dt).unwrap();
        prop_assert!((0.0..=100.0).contains(&next.moisture));
        Ok(())
    }

    pub fn check_monotone_forcing((m, _, amb, p, s, dt): StateCase) -> Result<(), TestCaseError> {
        let start = SoilState::new(m, SimTime::ZERO);
        let open = soil::step(start, true, &amb, &p, &s, dt).unwrap();
        let closed = soil::step(start, false, &amb, &p, &s, dt).unwrap();
        prop_assert!(open.moisture >= closed.moisture);
        prop_assert!(closed.moisture <= m);
        Ok(())
    }
}

pub mod sim {
    use sinet_core::controller::TimedSchedule;
    use sinet_core::edge::{self, EdgeNode};
    use sinet_core::netsim::RunLog;
    use sinet_core::scenario::{Calibration, ControlStrategy, NetworkMode};
    use sinet_core::{default_scenario, ScenarioConfig};

    pub fn with_loss(loss: f64) -> ScenarioConfig {
        let mut cfg = default_scenario();
        cfg.links.uplink = cfg.links.uplink.with_loss(loss);
        cfg.links.downlink = cfg.links.downlink.with_loss(loss);
        cfg
    }

    pub fn programmer_schedule() -> TimedSchedule {
        Calibration::builtin().schedule("programmer").unwrap()
    }

    /// Greenhouse 1 on the irrigation programmer for four days.
    pub fn programmer_scenario() -> ScenarioConfig {
        let mut cfg = default_scenario();
        cfg.duration = 4 * 86_400;
        cfg.greenhouses[0].strategy = ControlStrategy::TimedProgram(programmer_schedule());
        cfg
    }

    /// Runs against an in-memory edge node and asserts edge isolation.
    pub fn simulate(cfg: &ScenarioConfig) -> (RunLog, EdgeNode) {
        let (log, node) = edge::simulate(cfg).expect("scenario runs");
        if cfg.mode == NetworkMode::EdgeOnly {
            assert_isolated(&log, &node);
        }
        (log, node)
    }

    pub fn assert_isolated(log: &RunLog, node: &EdgeNode) {
        assert_eq!(log.egress_count, 0, "edge-only run reported egress");
        assert_eq!(node.guard().egress_count(), 0, "edge-only node counted egress");
        assert!(node.guard().is_isolated());
    }
}
