mod common;

use common::soil::*;
use proptest::prelude::*;
use sinet_core::domain::{PlantProfile, SimTime};
use sinet_core::soil::{self, AmbientConditions, SoilParams, SoilState};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(common::CASES))]

    #[test]
    fn halving_the_step_is_consistent(case in halving_case(HALVING_MAX_STEP)) {
        check_halving(case)?;
    }

    #[test]
    fn splitting_a_sampling_period_is_consistent(m in 0.0f64..=100.0, open in any::<bool>(), amb in ambient(),
                                                 p in plant(), s in params(), dt in 1u32..=60, n in 2u32..=12) {
        let start = SoilState::new(m, SimTime::ZERO);
        let whole = soil::step(start, open, &amb, &p, &s, f64::from(dt)).unwrap();
        let mut split = start;
        for _ in 0..n {
            split = soil::step(split, open, &amb, &p, &s, f64::from(dt) / f64::from(n)).unwrap();
        }
        prop_assert!((whole.moisture - split.moisture).abs() <= 0.05,
            "whole {} vs split {}", whole.moisture, split.moisture);
    }

    #[test]
    fn moisture_stays_bounded(case in state_case()) {
        check_bounded(case)?;
    }

    #[test]
    fn forcing_is_monotone(case in state_case()) {
        check_monotone_forcing(case)?;
    }

    #[test]
    fn wetter_soil_stays_wetter(a in 0.0f64..=100.0, b in 0.0f64..=100.0, open in any::<bool>(),
                                amb in ambient(), p in plant(), s in params(), dt in 1.0f64..=3600.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let lo_next = soil::step(SoilState::new(lo, SimTime::ZERO), open, &amb, &p, &s, dt).unwrap();
        let hi_next = soil::step(SoilState::new(hi, SimTime::ZERO), open, &amb, &p, &s, dt).unwrap();
        prop_assert!(lo_next.moisture <= hi_next.moisture);
    }

    #[test]
    fn advance_matches_manual_chunking(m in 0.0f64..=100.0, open in any::<bool>(), amb in ambient(),
                                       p in plant(), s in params(), hours in 1u32..=6) {
        let start = SoilState::new(m, SimTime::ZERO);
        let advanced = soil::advance(start, open, &amb, &p, &s, f64::from(hours) * 3600.0);
        let mut manual = start;
        for _ in 0..hours {
            manual = soil::step(manual, open, &amb, &p, &s, 3600.0).unwrap();
        }
        prop_assert_eq!(advanced.moisture, manual.moisture);
        prop_assert_eq!(advanced.last_update, SimTime::from_secs(u64::from(hours) * 3600));
    }
}

#[test]
fn retention_is_monotone_on_a_fine_grid() {
    let s = SoilParams::default();
    let values: Vec<f64> = (0..=1000).map(|i| s.retention_efficiency(f64::from(i) / 10.0)).collect();
    assert!(values.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(values[0], s.eta_min);
    assert!(values.iter().all(|&v| (s.eta_min..=1.0).contains(&v)));
    assert_eq!(s.retention_efficiency(s.knee), 1.0);
    let mid = s.retention_efficiency(20.0);
    assert!(mid > s.eta_min && mid < 1.0);
}

#[test]
fn non_positive_or_oversized_steps_are_rejected() {
    let st = SoilState::new(50.0, SimTime::ZERO);
    let amb = AmbientConditions { temperature: 36.0, is_day: true };
    let p = PlantProfile { name: "p".into(), uptake_rate_day: 0.5, uptake_rate_night: 0.25 };
    let s = SoilParams::default();
    for dt in [0.0, -1.0, 3600.5, f64::NAN] {
        assert!(soil::step(st, false, &amb, &p, &s, dt).is_err(), "dt {dt}");
    }
}
