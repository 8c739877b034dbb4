use lcassist_core::driver::{DriverStyle, SyntheticDriver};
use lcassist_core::labeling::label_ticks;
use lcassist_core::metrics::welch_ttest;
use lcassist_core::session::Session;
use lcassist_core::sim::{ScenarioConfig, WorldState};
use lcassist_core::warning::{DirectionSet, DisplaySet, EventKind, WarningEvent, EVENT_LIFETIME_TICKS};
use lcassist_core::{Direction, Intention};
use proptest::prelude::*;

/// Lane walk on three lanes moving one lane at a time.
fn lane_walk() -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
    (1usize..1500).prop_flat_map(|n| {
        (
            prop::collection::vec(prop_oneof![8 => Just(0i8), 1 => Just(-1i8), 1 => Just(1i8)], n),
            prop::collection::vec(prop_oneof![6 => Just(0u8), 1 => Just(1u8), 1 => Just(2u8)], n),
        )
            .prop_map(|(moves, ind)| {
                let mut lane = 2u8;
                let lanes = moves
                    .into_iter()
                    .map(|m| {
                        lane = (lane as i8 + m).clamp(1, 3) as u8;
                        lane
                    })
                    .collect();
                (lanes, ind)
            })
    })
}

fn event() -> impl Strategy<Value = (bool, usize, u8, u64)> {
    (any::<bool>(), 0usize..3, 1u8..64, 0u64..30)
}

proptest! {
    #[test]
    fn one_maneuver_per_crossing((lanes, ind) in lane_walk()) {
        let l = label_ticks(&lanes, &ind).unwrap();
        let crossings: Vec<usize> = (1..lanes.len()).filter(|&k| lanes[k] != lanes[k - 1]).collect();
        prop_assert_eq!(l.maneuvers.len(), crossings.len());
        let mut prev = 0;
        for (m, &k) in l.maneuvers.iter().zip(&crossings) {
            prop_assert_eq!(m.end, k);
            prop_assert!(m.start >= prev && m.start <= m.end);
            prop_assert!(m.len() <= 200);
            let want = if lanes[k] < lanes[k - 1] { Intention::Lcl } else { Intention::Lcr };
            prop_assert_eq!(m.class, want);
            prev = k;
        }
        let labeled: usize = l.maneuvers.iter().map(|m| m.len()).sum();
        prop_assert_eq!(l.ticks.iter().filter(|&&c| c != Intention::Lk).count(), labeled);
    }

    #[test]
    fn display_stays_consistent(offers in prop::collection::vec(event(), 1..200)) {
        let mut display = DisplaySet::new();
        let mut now = 0u64;
        for (warn, intention, bits, gap) in offers {
            now += gap;
            let dirs: Vec<Direction> = Direction::ALL.into_iter().filter(|d| bits >> d.index() & 1 == 1).collect();
            let kind = if warn { EventKind::Warning } else { EventKind::Approval };
            let e = WarningEvent::new(kind, Intention::from_index(intention).unwrap(), DirectionSet::from_slice(&dirs), now);
            if let Some(out) = display.offer(e) {
                prop_assert_eq!(out.expires_tick, now + EVENT_LIFETIME_TICKS);
                prop_assert!(!out.directions.is_empty());
            }
            let active = display.active();
            let approvals = active.iter().filter(|e| e.kind == EventKind::Approval).count();
            prop_assert!(approvals <= 1);
            prop_assert!(approvals == 0 || !display.has_warning());
            let mut seen = DirectionSet::EMPTY;
            for e in active {
                prop_assert!(e.issued_tick <= now && now < e.expires_tick);
                if e.kind == EventKind::Warning {
                    prop_assert!(seen.difference(e.directions) == seen && e.directions.difference(seen) == e.directions);
                    seen = seen.union(e.directions);
                }
            }
        }
    }

    #[test]
    fn welch_is_symmetric(
        a in prop::collection::vec(-5.0f64..5.0, 2..30),
        b in prop::collection::vec(-5.0f64..5.0, 2..30),
    ) {
        if let (Ok(ab), Ok(ba)) = (welch_ttest(&a, &b), welch_ttest(&b, &a)) {
            prop_assert!((ab.t + ba.t).abs() < 1e-9);
            prop_assert!((ab.p - ba.p).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ab.p));
        }
    }
}

#[test]
fn sessions_replay_exactly() {
    let run = || {
        let world = WorldState::spawn(&ScenarioConfig::s2(9)).unwrap();
        Session::new(world, SyntheticDriver::new(DriverStyle::default(), 9), None)
            .run(600)
            .unwrap()
    };
    assert_eq!(run(), run());
}
