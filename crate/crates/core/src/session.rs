//! The tick-synchronous loop.
//!
//! One call to [`Session::step`] handles tick `t` in a fixed order:
//!
//! 1. extract the feature vector from the world at `t`;
//! 2. fuzzify, predict and smooth (assisted sessions only);
//! 3. evaluate warnings for the smoothed intention and offer the result to
//!    the display set;
//! 4. ask the ego controller for controls, handing it the emitted event;
//! 5. record the tick;
//! 6. advance the world to `t + 1`.
//!
//! The prediction used at `t` is always made from the features of `t`.
//! Control sessions skip steps 2 and 3 entirely.

use alloc::vec::Vec;
use core::fmt;

use crate::driver::{EgoController, Observation};
use crate::features::FeatureVector;
use crate::forest::{ForestError, ForestModel, Smoother};
use crate::fuzzy::{FuzzyError, FuzzyModel};
use crate::sim::{SimError, WorldState, EGO_ID};
use crate::types::Intention;
use crate::warning::{evaluate, DisplaySet, ThresholdTable, WarningEvent};

/// Default smoothing window (ticks).
pub const SMOOTHING_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum SessionError {
    Sim(SimError),
    Fuzzy(FuzzyError),
    Forest(ForestError),
    /// The membership width of the fuzzy model differs from the forest's.
    ModelMismatch {
        fuzzy: usize,
        forest: usize,
    },
}

impl fmt::Display for SessionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SessionError::Sim(e) => write!(f, "simulation: {e}"),
            SessionError::Fuzzy(e) => write!(f, "fuzzy model: {e}"),
            SessionError::Forest(e) => write!(f, "forest: {e}"),
            SessionError::ModelMismatch { fuzzy, forest } => write!(
                f,
                "fuzzy model produces {fuzzy} memberships but the forest expects {forest}"
            ),
        }
    }
}

impl core::error::Error for SessionError {}

impl From<SimError> for SessionError {
    fn from(e: SimError) -> Self {
        SessionError::Sim(e)
    }
}

impl From<ForestError> for SessionError {
    fn from(e: ForestError) -> Self {
        SessionError::Forest(e)
    }
}

/// Online half of the stack: classifier, smoother and warning logic.
#[derive(Debug, Clone)]
pub struct Assistant {
    fuzzy: FuzzyModel,
    forest: ForestModel,
    table: ThresholdTable,
    smoother: Smoother,
    display: DisplaySet,
    memberships: Vec<f64>,
}

impl Assistant {
    pub fn new(
        fuzzy: FuzzyModel,
        forest: ForestModel,
        table: ThresholdTable,
        window: usize,
    ) -> Result<Self, SessionError> {
        if fuzzy.width() != forest.width {
            return Err(SessionError::ModelMismatch {
                fuzzy: fuzzy.width(),
                forest: forest.width,
            });
        }
        Ok(Assistant {
            memberships: Vec::with_capacity(fuzzy.width()),
            fuzzy,
            forest,
            table,
            smoother: Smoother::new(window.max(1)),
            display: DisplaySet::new(),
        })
    }

    pub fn display(&self) -> &DisplaySet {
        &self.display
    }

    pub fn table(&self) -> &ThresholdTable {
        &self.table
    }

    /// Raw and smoothed class for `fv`.
    pub fn classify(&mut self, fv: &FeatureVector) -> Result<(Intention, Intention), SessionError> {
        self.fuzzy.fuzzify_into(fv, &mut self.memberships);
        let raw = self.forest.predict(&self.memberships)?.class;
        Ok((raw, self.smoother.push(raw)))
    }

    /// Classifies, evaluates and returns `(raw, smoothed, emitted event)`.
    pub fn tick(
        &mut self,
        fv: &FeatureVector,
        tick: u64,
    ) -> Result<(Intention, Intention, Option<WarningEvent>), SessionError> {
        let (raw, smoothed) = self.classify(fv)?;
        self.display.expire(tick);
        let event = evaluate(smoothed, fv, &self.table, tick).and_then(|e| self.display.offer(e));
        Ok((raw, smoothed, event))
    }
}

/// Everything logged for one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct TickRecord {
    pub tick: u64,
    pub features: FeatureVector,
    /// Maneuver the controller was executing.
    pub intent: Intention,
    pub raw: Option<Intention>,
    pub smoothed: Option<Intention>,
    pub event: Option<WarningEvent>,
}

#[derive(Debug, Clone)]
pub struct Session<C> {
    world: WorldState,
    controller: C,
    assistant: Option<Assistant>,
}

impl<C: EgoController> Session<C> {
    /// `assistant = None` makes a control session.
    pub fn new(world: WorldState, controller: C, assistant: Option<Assistant>) -> Self {
        Session {
            world,
            controller,
            assistant,
        }
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn controller(&self) -> &C {
        &self.controller
    }

    pub fn controller_mut(&mut self) -> &mut C {
        &mut self.controller
    }

    pub fn assistant(&self) -> Option<&Assistant> {
        self.assistant.as_ref()
    }

    pub fn is_assisted(&self) -> bool {
        self.assistant.is_some()
    }

    pub fn step(&mut self) -> Result<TickRecord, SessionError> {
        let tick = self.world.tick();
        let ego = self.world.ego().ok_or(SimError::UnknownVehicle(EGO_ID))?.state.clone();
        let neighbors = self.world.neighbors(EGO_ID)?;
        let features = FeatureVector::from_parts(&ego, &neighbors);
        let (raw, smoothed, event) = match self.assistant.as_mut() {
            Some(a) => {
                let (r, s, e) = a.tick(&features, tick)?;
                (Some(r), Some(s), e)
            }
            None => (None, None, None),
        };
        let controls = self.controller.control(&Observation {
            tick,
            ego: &ego,
            neighbors: &neighbors,
            event: event.as_ref(),
        });
        let record = TickRecord {
            tick,
            features,
            intent: self.controller.intent(),
            raw,
            smoothed,
            event,
        };
        self.world.step(&controls)?;
        Ok(record)
    }

    /// Runs `ticks` steps and returns their records.
    pub fn run(&mut self, ticks: u64) -> Result<Vec<TickRecord>, SessionError> {
        let mut out = Vec::with_capacity(ticks as usize);
        for _ in 0..ticks {
            out.push(self.step()?);
        }
        Ok(out)
    }

    pub fn into_parts(self) -> (WorldState, C, Option<Assistant>) {
        (self.world, self.controller, self.assistant)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::{DriverStyle, SyntheticDriver};
    use crate::forest::{DecisionTree, ForestParams, Node};
    use crate::fuzzy::{build_mfs, FuzzyParams};
    use crate::sim::{Behavior, BehaviorProfile, ScenarioConfig, Vehicle, VehicleState};
    use crate::types::{Direction, Indicator};
    use crate::warning::EventKind;
    use alloc::vec;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fuzzy() -> FuzzyModel {
        let w = WorldState::spawn(&ScenarioConfig::s1(3)).unwrap();
        let mut s = Session::new(w, SyntheticDriver::new(DriverStyle::default(), 3), None);
        let log: Vec<FeatureVector> = s.run(400).unwrap().into_iter().map(|r| r.features).collect();
        build_mfs(&log, &FuzzyParams::default()).unwrap()
    }

    /// A one-tree forest that reads the intention off the indicator column.
    fn indicator_forest(width: usize) -> ForestModel {
        let ind = (width - 2) as u32;
        let leaf = |class| Node::Leaf { class };
        ForestModel {
            trees: vec![DecisionTree {
                nodes: vec![
                    Node::Split {
                        feature: ind,
                        threshold: 0.5,
                        left: 1,
                        right: 2,
                    },
                    leaf(Intention::Lk),
                    Node::Split {
                        feature: ind,
                        threshold: 1.5,
                        left: 3,
                        right: 4,
                    },
                    leaf(Intention::Lcl),
                    leaf(Intention::Lcr),
                ],
            }],
            tree_count: 1,
            width,
            seed: 0,
            driver_id: "stub".into(),
            params: ForestParams {
                tree_count: 1,
                ..ForestParams::default()
            },
            class_counts: [1, 1, 1],
        }
    }

    fn assistant() -> Assistant {
        let fz = fuzzy();
        let forest = indicator_forest(fz.width());
        Assistant::new(fz, forest, ThresholdTable::standard(), SMOOTHING_WINDOW).unwrap()
    }

    fn car(id: u32, lane: u8, s: f64, v: f64, behavior: Behavior) -> Vehicle {
        let profile = (behavior != Behavior::Ego).then(|| {
            let mut p = BehaviorProfile::sample(behavior, &mut ChaCha8Rng::seed_from_u64(id as u64));
            p.desired_speed = v;
            p.overtake_ttc = (0.0, 0.0);
            p.patience = 1e9;
            p.keep_right_rate = 0.0;
            p
        });
        Vehicle {
            state: VehicleState {
                id,
                s,
                lane_index: lane,
                lateral_offset: 0.0,
                v,
                a: 0.0,
                heading: 0.0,
                steering: 0.0,
                indicator: Indicator::Off,
                gear: 5,
                behavior,
            },
            profile,
            lane_change: None,
            blocked_for: 0.0,
        }
    }

    /// Slow leader ahead of the ego and a slower car just ahead in lane 1.
    fn encounter() -> WorldState {
        let vehicles = vec![
            car(0, 2, 0.0, 115.0, Behavior::Ego),
            car(1, 2, 70.0, 80.0, Behavior::Cautious),
            car(2, 1, 40.0, 88.0, Behavior::Aggressive),
        ];
        WorldState::new(vehicles, 5000.0, 0).unwrap()
    }

    fn style(compliance: f64) -> DriverStyle {
        DriverStyle {
            compliance,
            indicator_probability: 1.0,
            random_change_rate: 0.0,
            keep_right_rate: 0.0,
            ..DriverStyle::default()
        }
    }

    fn lanes(records: &[TickRecord]) -> Vec<u8> {
        records.iter().map(|r| r.features.lane).collect()
    }

    #[test]
    fn control_session_changes_lane_and_emits_nothing() {
        let mut s = Session::new(encounter(), SyntheticDriver::new(style(1.0), 5), None);
        let recs = s.run(200).unwrap();
        assert!(recs.iter().all(|r| r.event.is_none() && r.raw.is_none()));
        assert!(lanes(&recs).contains(&1));
    }

    #[test]
    fn compliant_driver_defers_while_fl_warning_active() {
        let mut s = Session::new(encounter(), SyntheticDriver::new(style(1.0), 5), Some(assistant()));
        let recs = s.run(200).unwrap();
        let fl: Vec<&WarningEvent> = recs
            .iter()
            .filter_map(|r| r.event.as_ref())
            .filter(|e| e.kind == EventKind::Warning && e.directions.contains(Direction::Fl))
            .collect();
        assert!(!fl.is_empty());
        for e in fl {
            for r in &recs[e.issued_tick as usize..(e.expires_tick as usize).min(recs.len())] {
                assert_eq!(r.features.lane, 2, "crossed at tick {} under {e:?}", r.tick);
            }
        }
        assert!(s.controller().warning_counts().1 > 0);
    }

    #[test]
    fn unheeded_warnings_leave_the_trajectory_untouched() {
        let mut a = Session::new(encounter(), SyntheticDriver::new(style(0.0), 5), Some(assistant()));
        let mut c = Session::new(encounter(), SyntheticDriver::new(style(0.0), 5), None);
        let ra = a.run(300).unwrap();
        let rc = c.run(300).unwrap();
        assert!(ra.iter().any(|r| r.event.is_some()));
        for (x, y) in ra.iter().zip(&rc) {
            assert_eq!(x.features, y.features);
        }
        assert_eq!(a.world().vehicles(), c.world().vehicles());
    }

    #[test]
    fn prediction_uses_features_of_the_same_tick() {
        let mut s = Session::new(encounter(), SyntheticDriver::new(style(0.0), 5), Some(assistant()));
        for r in s.run(200).unwrap() {
            let expect = match r.features.indicator {
                0 => Intention::Lk,
                1 => Intention::Lcl,
                _ => Intention::Lcr,
            };
            assert_eq!(r.raw, Some(expect));
        }
    }

    #[test]
    fn events_expire_after_forty_ticks() {
        let w = WorldState::spawn(&ScenarioConfig::s2(8)).unwrap();
        let mut s = Session::new(w, SyntheticDriver::new(DriverStyle::default(), 8), Some(assistant()));
        let recs = s.run(2000).unwrap();
        let mut n = 0;
        for r in &recs {
            if let Some(e) = r.event {
                n += 1;
                assert_eq!(e.issued_tick, r.tick);
                assert_eq!(e.expires_tick, r.tick + 40);
            }
        }
        assert!(n > 0);
    }

    #[test]
    fn sessions_are_deterministic() {
        let run = || {
            let w = WorldState::spawn(&ScenarioConfig::s2(4)).unwrap();
            let mut s = Session::new(w, SyntheticDriver::new(DriverStyle::default(), 4), Some(assistant()));
            s.run(600).unwrap()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn mismatched_models_are_rejected() {
        let fz = fuzzy();
        let forest = indicator_forest(fz.width() + 1);
        assert_eq!(
            Assistant::new(fz.clone(), forest, ThresholdTable::standard(), 10).unwrap_err(),
            SessionError::ModelMismatch {
                fuzzy: fz.width(),
                forest: fz.width() + 1
            }
        );
    }
}
