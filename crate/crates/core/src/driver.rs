//! Scripted stand-in for a human ego driver.
//!
//! The driver cruises with an IDM-style speed controller, overtakes slower
//! leaders, drifts back right when the right lane is free and now and then
//! changes lanes for no particular reason. Its gap check is careless: it looks
//! at distances only, never at closing speeds, so it sometimes pulls in front
//! of fast traffic.
//!
//! A lane change is a turn-signal lead (when the indicator is used) followed
//! by a cosine lateral profile; the lane boundary is crossed halfway through.
//!
//! Warnings reach the driver after a reaction latency. For every warning it
//! perceives it draws once from a dedicated RNG and complies with
//! probability `compliance`. Complying means cancelling or aborting a lane
//! change the warning is about, or braking for a front warning while lane
//! keeping. With compliance 0 the driver behaves exactly as without
//! assistance.

use alloc::collections::VecDeque;
use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::sim::{
    kmh_to_ms, lane_center, ControlInput, NeighborSet, VehicleState, ANGLE_LIMIT, LANE_COUNT, LANE_WIDTH,
    STEERING_RATIO, WHEELBASE,
};
use crate::types::{seconds_to_ticks, Direction, Indicator, Intention, Side, TICK_SECONDS};
use crate::warning::{EventKind, WarningEvent};

/// What the ego controller sees each tick.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub tick: u64,
    pub ego: &'a VehicleState,
    pub neighbors: &'a NeighborSet,
    /// Event emitted this tick, if any.
    pub event: Option<&'a WarningEvent>,
}

/// Source of ego controls for a session.
pub trait EgoController {
    fn control(&mut self, obs: &Observation<'_>) -> ControlInput;

    /// Maneuver the controller is currently executing, for logging.
    fn intent(&self) -> Intention {
        Intention::Lk
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default))]
pub struct DriverStyle {
    /// km/h
    pub desired_speed: f64,
    /// s
    pub time_headway: f64,
    /// m/s²
    pub max_accel: f64,
    /// m/s²
    pub comfort_decel: f64,
    /// Weight of the closing-speed term in the desired gap.
    pub anticipation: f64,
    /// Front TTC (s) below which a slower leader is overtaken.
    pub overtake_ttc: f64,
    /// Gap (m) to a slower leader below which it is overtaken.
    pub overtake_gap: f64,
    pub indicator_probability: f64,
    /// Indicator time before steering starts (s).
    pub indicator_lead: f64,
    /// Duration of the lateral motion (s).
    pub maneuver_seconds: f64,
    /// Minimum target-lane front gap (m).
    pub accept_front_gap: f64,
    /// Minimum target-lane rear gap (m).
    pub accept_rear_gap: f64,
    /// Rate (1/s) of returning to a free right lane.
    pub keep_right_rate: f64,
    /// Rate (1/s) of unmotivated lane changes.
    pub random_change_rate: f64,
    /// Pause after a lane change or abort (s).
    pub cooldown: f64,
    /// Lateral sway amplitude while lane keeping (m).
    pub sway_amplitude: f64,
    /// s
    pub sway_period: f64,
    /// Probability of heeding a perceived matching warning.
    pub compliance: f64,
    /// Warning perception delay (ticks).
    pub reaction_ticks: u64,
    /// Deceleration when heeding a front warning (m/s²).
    pub warning_brake: f64,
}

impl Default for DriverStyle {
    fn default() -> Self {
        DriverStyle {
            desired_speed: 120.0,
            time_headway: 1.0,
            max_accel: 1.5,
            comfort_decel: 2.0,
            anticipation: 0.3,
            overtake_ttc: 7.0,
            overtake_gap: 45.0,
            indicator_probability: 0.75,
            indicator_lead: 1.0,
            maneuver_seconds: 5.0,
            accept_front_gap: 12.0,
            accept_rear_gap: 6.0,
            keep_right_rate: 0.15,
            random_change_rate: 0.04,
            cooldown: 5.0,
            sway_amplitude: 0.15,
            sway_period: 9.0,
            compliance: 0.0,
            reaction_ticks: 10,
            warning_brake: 3.0,
        }
    }
}

impl DriverStyle {
    pub fn validate(&self) -> Result<(), &'static str> {
        let unit = 0.0..=1.0;
        if !unit.contains(&self.compliance) {
            return Err("compliance must lie in [0, 1]");
        }
        if !unit.contains(&self.indicator_probability) {
            return Err("indicator probability must lie in [0, 1]");
        }
        if !(self.maneuver_seconds > 0.0) || !(self.desired_speed > 0.0) {
            return Err("maneuver duration and desired speed must be positive");
        }
        if !(self.indicator_lead >= 0.0) || !(self.cooldown >= 0.0) {
            return Err("indicator lead and cooldown must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Plan {
    Keep {
        center: f64,
    },
    Signal {
        side: Side,
        center: f64,
        until: u64,
    },
    Change {
        side: Side,
        from_lane: u8,
        from: f64,
        start: u64,
        indicator: bool,
    },
    /// Back to `to` after an abort.
    Return {
        from: f64,
        to: f64,
        start: u64,
    },
}

/// Seconds taken to steer back after an abort.
const RETURN_SECONDS: f64 = 2.5;
/// No lane change during the first seconds of a run.
const SETTLE_SECONDS: f64 = 2.5;
const LATERAL_GAIN: f64 = 1.0;
const HEADING_GAIN: f64 = 4.0;
const MAX_HEADING: f64 = 0.08;

#[derive(Debug, Clone)]
pub struct SyntheticDriver {
    style: DriverStyle,
    rng: ChaCha8Rng,
    compliance_rng: ChaCha8Rng,
    plan: Option<Plan>,
    cooldown_until: u64,
    heeded: Vec<WarningEvent>,
    pending: VecDeque<(u64, WarningEvent)>,
    sway_phase: f64,
    complied: u64,
    perceived: u64,
}

impl SyntheticDriver {
    pub fn new(style: DriverStyle, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xd21e_0000_0000_0001);
        let sway_phase = rng.random_range(0.0..2.0 * PI);
        SyntheticDriver {
            style,
            rng,
            compliance_rng: ChaCha8Rng::seed_from_u64(seed ^ 0xc0de_0000_0000_0002),
            plan: None,
            cooldown_until: seconds_to_ticks(SETTLE_SECONDS),
            heeded: Vec::new(),
            pending: VecDeque::new(),
            sway_phase,
            complied: 0,
            perceived: 0,
        }
    }

    pub fn style(&self) -> &DriverStyle {
        &self.style
    }

    /// Warnings perceived and warnings heeded so far.
    pub fn warning_counts(&self) -> (u64, u64) {
        (self.perceived, self.complied)
    }

    fn sway(&self, tick: u64) -> (f64, f64, f64) {
        let w = 2.0 * PI / self.style.sway_period;
        let t = tick as f64 * TICK_SECONDS;
        let a = self.style.sway_amplitude;
        let ph = w * t + self.sway_phase;
        (a * libm::sin(ph), a * w * libm::cos(ph), -a * w * w * libm::sin(ph))
    }

    /// Lateral reference `(y, y', y'')` of the current plan.
    fn reference(&self, tick: u64) -> (f64, f64, f64) {
        let t_m = self.style.maneuver_seconds;
        match self.plan.unwrap() {
            Plan::Keep { center } | Plan::Signal { center, .. } => {
                let (y, dy, ddy) = self.sway(tick);
                (center + y, dy, ddy)
            }
            Plan::Change { side, from, start, .. } => {
                let t = ((tick - start) as f64 * TICK_SECONDS).min(t_m);
                let s = side.sign() * LANE_WIDTH;
                let ph = PI * t / t_m;
                (
                    from + s * (1.0 - libm::cos(ph)) / 2.0,
                    s * PI / (2.0 * t_m) * libm::sin(ph),
                    s * PI * PI / (2.0 * t_m * t_m) * libm::cos(ph),
                )
            }
            Plan::Return { from, to, start } => {
                let t = ((tick - start) as f64 * TICK_SECONDS).min(RETURN_SECONDS);
                let d = to - from;
                let ph = PI * t / RETURN_SECONDS;
                (
                    from + d * (1.0 - libm::cos(ph)) / 2.0,
                    d * PI / (2.0 * RETURN_SECONDS) * libm::sin(ph),
                    d * PI * PI / (2.0 * RETURN_SECONDS * RETURN_SECONDS) * libm::cos(ph),
                )
            }
        }
    }

    fn steering(&self, ego: &VehicleState, tick: u64) -> f64 {
        let v = kmh_to_ms(ego.v).max(1.0);
        let (y_ref, dy_ref, ddy_ref) = self.reference(tick);
        let y = ego.lateral_position();
        let heading_cmd = libm::atan2(dy_ref + LATERAL_GAIN * (y_ref - y), v).clamp(-MAX_HEADING, MAX_HEADING);
        let yaw_cmd = ddy_ref / v + HEADING_GAIN * (heading_cmd - ego.heading);
        (STEERING_RATIO * libm::atan(WHEELBASE * yaw_cmd / v)).clamp(-ANGLE_LIMIT, ANGLE_LIMIT)
    }

    fn follow(&self, v: f64, leader: Option<(f64, f64)>) -> f64 {
        let s = &self.style;
        let v0 = kmh_to_ms(s.desired_speed);
        let free = s.max_accel * (1.0 - libm::pow(v / v0, 4.0));
        match leader {
            None => free,
            Some((gap, v_lead)) => {
                let dynamic = s.anticipation * v * (v - v_lead) / (2.0 * libm::sqrt(s.max_accel * s.comfort_decel));
                let desired = 2.0 + (v * s.time_headway + dynamic).max(0.0);
                let r = desired / gap.max(0.1);
                free - s.max_accel * r * r
            }
        }
    }

    fn accel(&self, ego: &VehicleState, nb: &NeighborSet) -> f64 {
        let v = kmh_to_ms(ego.v);
        let lead = |d: Direction| nb.get(d).map(|n| (n.gap, kmh_to_ms(n.speed)));
        let mut a = self.follow(v, lead(Direction::F));
        if let Some(Plan::Change { side, from_lane, .. }) = self.plan {
            if ego.lane_index == from_lane {
                let d = match side {
                    Side::Left => Direction::Fl,
                    Side::Right => Direction::Fr,
                };
                a = a.min(self.follow(v, lead(d)));
            }
        }
        if self.front_warning() {
            a = a.min(-self.style.warning_brake);
        }
        a.clamp(-8.0, self.style.max_accel)
    }

    /// Distance-only check of the target lane.
    fn side_open(&self, ego: &VehicleState, nb: &NeighborSet, side: Side) -> bool {
        let lane = ego.lane_index as i32 + side.lane_delta();
        if lane < 1 || lane > LANE_COUNT as i32 {
            return false;
        }
        let (f, b) = match side {
            Side::Left => (Direction::Fl, Direction::Bl),
            Side::Right => (Direction::Fr, Direction::Br),
        };
        nb.gap(f) >= self.style.accept_front_gap && nb.gap(b) >= self.style.accept_rear_gap
    }

    fn choose_change(&mut self, ego: &VehicleState, nb: &NeighborSet) -> Option<Side> {
        let s = &self.style;
        let slow_leader = nb
            .get(Direction::F)
            .is_some_and(|n| n.speed < s.desired_speed - 5.0 && (n.ttc < s.overtake_ttc || n.gap < s.overtake_gap));
        let u: f64 = self.rng.random();
        let side = if slow_leader {
            if ego.lane_index > 1 {
                Some(Side::Left)
            } else {
                Some(Side::Right)
            }
        } else if ego.lane_index < LANE_COUNT && nb.gap(Direction::Fr) > 80.0 && u < s.keep_right_rate * TICK_SECONDS {
            Some(Side::Right)
        } else if u > 1.0 - s.random_change_rate * TICK_SECONDS {
            if ego.lane_index == 1 {
                Some(Side::Right)
            } else if ego.lane_index == LANE_COUNT || u > 1.0 - 0.5 * s.random_change_rate * TICK_SECONDS {
                Some(Side::Left)
            } else {
                Some(Side::Right)
            }
        } else {
            None
        };
        side.filter(|&side| self.side_open(ego, nb, side) && !self.heeded.iter().any(|e| concerns(e, side)))
    }

    fn center(&self, ego: &VehicleState) -> f64 {
        match self.plan {
            Some(Plan::Keep { center }) | Some(Plan::Signal { center, .. }) => center,
            _ => lane_center(ego.lane_index),
        }
    }

    fn begin_change(&mut self, side: Side, ego: &VehicleState, tick: u64, indicator: bool) {
        self.plan = Some(Plan::Change {
            side,
            from_lane: ego.lane_index,
            from: self.center(ego),
            start: tick,
            indicator,
        });
    }

    fn maneuver_side(&self) -> Option<Side> {
        match self.plan {
            Some(Plan::Signal { side, .. }) | Some(Plan::Change { side, .. }) => Some(side),
            _ => None,
        }
    }

    /// Whether a heeded warning calls for giving up the current plan.
    fn matches(&self, event: &WarningEvent, ego: &VehicleState) -> bool {
        match self.maneuver_side() {
            Some(side) => {
                let before_crossing = match self.plan {
                    Some(Plan::Change { from_lane, .. }) => ego.lane_index == from_lane,
                    _ => true,
                };
                before_crossing && concerns(event, side)
            }
            None => false,
        }
    }

    fn heed(&mut self, ego: &VehicleState, tick: u64) {
        match self.plan {
            Some(Plan::Signal { center, .. }) => {
                self.plan = Some(Plan::Keep { center });
                self.cooldown_until = tick + seconds_to_ticks(self.style.cooldown);
            }
            Some(Plan::Change { from, .. }) => {
                self.plan = Some(Plan::Return {
                    from: ego.lateral_position(),
                    to: from,
                    start: tick,
                });
            }
            _ => {}
        }
    }

    /// Queues the new warning and draws once for each warning whose
    /// reaction latency has elapsed; heeded ones are kept while active.
    fn perceive(&mut self, obs: &Observation<'_>) {
        if let Some(e) = obs.event {
            if e.kind == EventKind::Warning {
                self.pending.push_back((e.issued_tick + self.style.reaction_ticks, *e));
            }
        }
        while let Some(&(due, event)) = self.pending.front() {
            if due > obs.tick {
                break;
            }
            self.pending.pop_front();
            self.perceived += 1;
            let u: f64 = self.compliance_rng.random();
            if u < self.style.compliance {
                self.complied += 1;
                self.heeded.push(event);
            }
        }
        self.heeded.retain(|e| e.is_active(obs.tick));
        if self.heeded.iter().any(|e| self.matches(e, obs.ego)) {
            self.heed(obs.ego, obs.tick);
        }
    }

    fn front_warning(&self) -> bool {
        self.maneuver_side().is_none() && self.heeded.iter().any(|e| e.directions.contains(Direction::F))
    }

    fn advance_plan(&mut self, obs: &Observation<'_>) {
        let tick = obs.tick;
        let ego = obs.ego;
        let plan = *self.plan.get_or_insert(Plan::Keep {
            center: lane_center(ego.lane_index),
        });
        match plan {
            Plan::Keep { .. } => {
                if tick >= self.cooldown_until {
                    if let Some(side) = self.choose_change(ego, obs.neighbors) {
                        let indicator = self.rng.random::<f64>() < self.style.indicator_probability;
                        if indicator && self.style.indicator_lead > 0.0 {
                            self.plan = Some(Plan::Signal {
                                side,
                                center: self.center(ego),
                                until: tick + seconds_to_ticks(self.style.indicator_lead),
                            });
                        } else {
                            self.begin_change(side, ego, tick, indicator);
                        }
                    }
                }
            }
            Plan::Signal { side, until, .. } => {
                if tick >= until {
                    self.begin_change(side, ego, tick, true);
                }
            }
            Plan::Change { side, from, start, .. } => {
                if (tick - start) as f64 * TICK_SECONDS >= self.style.maneuver_seconds {
                    self.plan = Some(Plan::Keep {
                        center: from + side.sign() * LANE_WIDTH,
                    });
                    self.cooldown_until = tick + seconds_to_ticks(self.style.cooldown);
                }
            }
            Plan::Return { to, start, .. } => {
                if (tick - start) as f64 * TICK_SECONDS >= RETURN_SECONDS {
                    self.plan = Some(Plan::Keep { center: to });
                    self.cooldown_until = tick + seconds_to_ticks(self.style.cooldown);
                }
            }
        }
    }

    /// The stalk cancels itself once the ego is in the new lane.
    fn indicator(&self, ego: &VehicleState) -> Indicator {
        match self.plan {
            Some(Plan::Signal { side, .. }) => side.indicator(),
            Some(Plan::Change {
                side,
                from_lane,
                indicator: true,
                ..
            }) if ego.lane_index == from_lane => side.indicator(),
            _ => Indicator::Off,
        }
    }
}

/// A warning about `side`: issued for that lane change, or naming a
/// neighbor on that side.
fn concerns(event: &WarningEvent, side: Side) -> bool {
    event.kind == EventKind::Warning
        && (event.intention == side.intention() || event.directions.iter().any(|d| d.side() == Some(side)))
}

impl EgoController for SyntheticDriver {
    fn control(&mut self, obs: &Observation<'_>) -> ControlInput {
        self.perceive(obs);
        self.advance_plan(obs);
        ControlInput {
            steering: self.steering(obs.ego, obs.tick),
            accel: self.accel(obs.ego, obs.neighbors),
            indicator: self.indicator(obs.ego),
        }
    }

    fn intent(&self) -> Intention {
        match self.maneuver_side() {
            Some(side) => side.intention(),
            None => Intention::Lk,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{Behavior, Vehicle, WorldState, EGO_ID};
    use crate::warning::DirectionSet;
    use alloc::vec;

    fn lone_world(lane: u8, v: f64) -> WorldState {
        let ego = Vehicle {
            state: VehicleState {
                id: EGO_ID,
                s: 0.0,
                lane_index: lane,
                lateral_offset: 0.0,
                v,
                a: 0.0,
                heading: 0.0,
                steering: 0.0,
                indicator: Indicator::Off,
                gear: 5,
                behavior: Behavior::Ego,
            },
            profile: None,
            lane_change: None,
            blocked_for: 0.0,
        };
        WorldState::new(vec![ego], 5000.0, 0).unwrap()
    }

    fn drive(world: &mut WorldState, driver: &mut SyntheticDriver, ticks: u64) {
        for _ in 0..ticks {
            let ego = world.ego().unwrap().state.clone();
            let nb = world.neighbors(EGO_ID).unwrap();
            let c = driver.control(&Observation {
                tick: world.tick(),
                ego: &ego,
                neighbors: &nb,
                event: None,
            });
            world.step(&c).unwrap();
        }
    }

    #[test]
    fn lane_keeping_stays_in_lane() {
        let style = DriverStyle {
            keep_right_rate: 0.0,
            random_change_rate: 0.0,
            ..DriverStyle::default()
        };
        let mut w = lone_world(2, 110.0);
        let mut d = SyntheticDriver::new(style, 1);
        for _ in 0..1200 {
            drive(&mut w, &mut d, 1);
            let e = w.ego().unwrap().state.clone();
            assert_eq!(e.lane_index, 2);
            assert!(e.lateral_offset.abs() < 0.4);
        }
    }

    #[test]
    fn lane_change_crosses_halfway() {
        let style = DriverStyle {
            keep_right_rate: 0.0,
            random_change_rate: 0.0,
            ..DriverStyle::default()
        };
        let mut w = lone_world(2, 110.0);
        let mut d = SyntheticDriver::new(style, 2);
        drive(&mut w, &mut d, 100);
        let ego = w.ego().unwrap().state.clone();
        d.begin_change(Side::Left, &ego, w.tick(), true);
        let start = w.tick();
        let mut crossed = None;
        for _ in 0..140 {
            drive(&mut w, &mut d, 1);
            let e = w.ego().unwrap().state.clone();
            if crossed.is_none() && e.lane_index == 1 {
                crossed = Some(w.tick() - start);
            }
            if crossed.is_none() {
                assert_eq!(e.indicator, Indicator::Left);
                assert!(e.heading >= -1e-3);
            }
        }
        let k = crossed.expect("never crossed");
        assert!((45..=56).contains(&k), "crossed after {k} ticks");
        let e = w.ego().unwrap().state.clone();
        assert!(e.lateral_offset.abs() < 0.3);
        assert_eq!(e.indicator, Indicator::Off);
    }

    #[test]
    fn compliance_one_aborts_before_crossing() {
        let style = DriverStyle {
            keep_right_rate: 0.0,
            random_change_rate: 0.0,
            compliance: 1.0,
            ..DriverStyle::default()
        };
        let mut w = lone_world(2, 110.0);
        let mut d = SyntheticDriver::new(style, 3);
        drive(&mut w, &mut d, 100);
        let ego = w.ego().unwrap().state.clone();
        d.begin_change(Side::Left, &ego, w.tick(), true);
        drive(&mut w, &mut d, 5);
        let warn = WarningEvent::new(
            EventKind::Warning,
            Intention::Lcl,
            DirectionSet::from_slice(&[Direction::Bl]),
            w.tick(),
        );
        let ego = w.ego().unwrap().state.clone();
        let nb = w.neighbors(EGO_ID).unwrap();
        let c = d.control(&Observation {
            tick: w.tick(),
            ego: &ego,
            neighbors: &nb,
            event: Some(&warn),
        });
        w.step(&c).unwrap();
        drive(&mut w, &mut d, 200);
        assert_eq!(w.ego().unwrap().state.lane_index, 2);
        assert_eq!(d.warning_counts(), (1, 1));
        assert_eq!(d.intent(), Intention::Lk);
    }

    #[test]
    fn compliance_zero_matches_unassisted() {
        let style = DriverStyle::default();
        let mut a = SyntheticDriver::new(style.clone(), 9);
        let mut b = SyntheticDriver::new(style, 9);
        let mut wa = lone_world(2, 110.0);
        let mut wb = lone_world(2, 110.0);
        for t in 0..2000u64 {
            for (w, d, warn) in [(&mut wa, &mut a, false), (&mut wb, &mut b, true)] {
                let ego = w.ego().unwrap().state.clone();
                let nb = w.neighbors(EGO_ID).unwrap();
                let e = WarningEvent::new(
                    EventKind::Warning,
                    Intention::Lk,
                    DirectionSet::from_slice(&[Direction::F]),
                    t,
                );
                let c = d.control(&Observation {
                    tick: t,
                    ego: &ego,
                    neighbors: &nb,
                    event: (warn && t.is_multiple_of(37)).then_some(&e),
                });
                w.step(&c).unwrap();
            }
            assert_eq!(wa.ego().unwrap().state, wb.ego().unwrap().state);
        }
    }
}
