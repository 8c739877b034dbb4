//! Car following and lane-change decisions for surrounding vehicles.
//!
//! Longitudinal control is an intelligent-driver-model variant whose
//! velocity-difference term is scaled by an `anticipation` weight: aggressive
//! drivers close in on slower leaders before braking, which is what lets their
//! front TTC reach the short overtaking window.

use rand::Rng;

use super::neighbors::NeighborSet;
use super::vehicle::{Behavior, Vehicle};
use super::{kmh_to_ms, LANE_COUNT};
use crate::types::{Direction, Side, TICK_SECONDS};

/// Hardest braking any vehicle applies (m/s²).
pub const MAX_BRAKING: f64 = 9.0;

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BehaviorProfile {
    /// km/h
    pub desired_speed: f64,
    /// s
    pub time_headway: f64,
    /// m/s²
    pub max_accel: f64,
    /// m/s²
    pub comfort_decel: f64,
    /// Standstill gap (m).
    pub min_gap: f64,
    /// Weight of the closing-speed term of the desired gap, in `[0, 1]`.
    pub anticipation: f64,
    /// Front-TTC window `[lo, hi]` (s) that triggers an overtake.
    pub overtake_ttc: (f64, f64),
    /// Minimum front/rear gap accepted in the target lane (m).
    pub accept_gap: f64,
    /// Minimum TTC accepted to the new leader in the target lane (s).
    pub accept_ttc: f64,
    /// Largest braking imposed on the new follower (m/s²).
    pub safe_decel: f64,
    /// Seconds stuck behind a slow leader before overtaking anyway.
    pub patience: f64,
    /// Rate (1/s) at which a free right lane is taken.
    pub keep_right_rate: f64,
    pub overtake_right: bool,
}

impl BehaviorProfile {
    /// Draws a profile for a behavior class. Panics for [`Behavior::Ego`].
    pub fn sample<R: Rng + ?Sized>(behavior: Behavior, rng: &mut R) -> Self {
        match behavior {
            Behavior::Cautious => BehaviorProfile {
                desired_speed: rng.random_range(85.0..100.0),
                time_headway: 1.8,
                max_accel: 1.0,
                comfort_decel: 1.5,
                min_gap: 3.0,
                anticipation: 1.0,
                overtake_ttc: (0.0, 6.0),
                accept_gap: 25.0,
                accept_ttc: 6.0,
                safe_decel: 1.5,
                patience: 12.0,
                keep_right_rate: 0.5,
                overtake_right: false,
            },
            Behavior::Normal => BehaviorProfile {
                desired_speed: rng.random_range(100.0..125.0),
                time_headway: 1.4,
                max_accel: 1.4,
                comfort_decel: 2.0,
                min_gap: 2.5,
                anticipation: 0.5,
                overtake_ttc: (0.0, 4.0),
                accept_gap: 15.0,
                accept_ttc: 4.0,
                safe_decel: 2.5,
                patience: 6.0,
                keep_right_rate: 0.3,
                overtake_right: false,
            },
            Behavior::Aggressive => BehaviorProfile {
                desired_speed: rng.random_range(125.0..150.0),
                time_headway: 0.9,
                max_accel: 2.5,
                comfort_decel: 3.0,
                min_gap: 2.0,
                anticipation: 0.1,
                overtake_ttc: (2.2, 3.0),
                accept_gap: 6.0,
                accept_ttc: 1.5,
                safe_decel: 4.5,
                patience: 2.0,
                keep_right_rate: 0.15,
                overtake_right: true,
            },
            Behavior::Ego => panic!("the ego vehicle has no behavior profile"),
        }
    }

    /// Car-following acceleration (m/s²) at speed `v` (m/s) behind an optional
    /// leader `(gap m, leader speed m/s)`.
    pub fn follow_accel(&self, v: f64, leader: Option<(f64, f64)>) -> f64 {
        let v0 = kmh_to_ms(self.desired_speed).max(0.1);
        let free = self.max_accel * (1.0 - libm::pow(v / v0, 4.0));
        let acc = match leader {
            None => free,
            Some((gap, v_lead)) => {
                let dv = v - v_lead;
                let dynamic = self.anticipation * v * dv / (2.0 * libm::sqrt(self.max_accel * self.comfort_decel));
                let desired = self.min_gap + (v * self.time_headway + dynamic).max(0.0);
                let ratio = desired / gap.max(0.1);
                free - self.max_accel * ratio * ratio
            }
        };
        acc.clamp(-MAX_BRAKING, self.max_accel)
    }

    pub fn in_overtake_window(&self, front_ttc: f64) -> bool {
        front_ttc >= self.overtake_ttc.0 && front_ttc <= self.overtake_ttc.1
    }
}

/// What a surrounding vehicle does this tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyAction {
    /// m/s²
    pub accel: f64,
    pub start_lane_change: Option<Side>,
}

fn leader(neighbors: &NeighborSet, dir: Direction) -> Option<(f64, f64)> {
    neighbors.get(dir).map(|n| (n.gap, kmh_to_ms(n.speed)))
}

fn side_is_safe(vehicle: &Vehicle, profile: &BehaviorProfile, nb: &NeighborSet, side: Side) -> bool {
    let lane = vehicle.state.lane_index as i32 + side.lane_delta();
    if lane < 1 || lane > LANE_COUNT as i32 {
        return false;
    }
    let (front, rear) = match side {
        Side::Left => (Direction::Fl, Direction::Bl),
        Side::Right => (Direction::Fr, Direction::Br),
    };
    if let Some(f) = nb.get(front) {
        if f.gap < profile.accept_gap || f.ttc < profile.accept_ttc {
            return false;
        }
    }
    if let Some(r) = nb.get(rear) {
        if r.gap < profile.accept_gap {
            return false;
        }
        let v = kmh_to_ms(vehicle.state.v);
        let v_r = kmh_to_ms(r.speed);
        if v_r > v {
            let needed = (v_r * v_r - v * v) / (2.0 * r.gap.max(0.1));
            if needed > profile.safe_decel {
                return false;
            }
        }
    }
    true
}

/// Behavior policy of a surrounding vehicle: car following plus a lane-change
/// decision.
///
/// An overtake starts when the front TTC lies in the profile's trigger window
/// (or the vehicle has been stuck behind a slow leader longer than its
/// patience) and the target lane is acceptable. Vehicles return to the right
/// when the right lane is free.
pub fn behavior_policy<R: Rng + ?Sized>(vehicle: &Vehicle, neighbors: &NeighborSet, rng: &mut R) -> PolicyAction {
    let Some(profile) = vehicle.profile.as_ref() else {
        return PolicyAction {
            accel: 0.0,
            start_lane_change: None,
        };
    };
    let v = kmh_to_ms(vehicle.state.v);
    let mut accel = profile.follow_accel(v, leader(neighbors, Direction::F));

    if let Some(lc) = vehicle.lane_change {
        let target_front = match lc.side {
            Side::Left => Direction::Fl,
            Side::Right => Direction::Fr,
        };
        // lane_index flips mid-maneuver; the old lane's leader is then behind
        // and only the current lane matters
        if vehicle.state.lane_index == lc.from_lane {
            if let Some(l) = leader(neighbors, target_front) {
                accel = accel.min(profile.follow_accel(v, Some(l)));
            }
        }
        return PolicyAction {
            accel,
            start_lane_change: None,
        };
    }

    let front_ttc = neighbors.ttc(Direction::F);
    let wants_overtake = neighbors.get(Direction::F).is_some()
        && (profile.in_overtake_window(front_ttc) || vehicle.blocked_for >= profile.patience);

    let mut start = None;
    if wants_overtake {
        if side_is_safe(vehicle, profile, neighbors, Side::Left) {
            start = Some(Side::Left);
        } else if profile.overtake_right && side_is_safe(vehicle, profile, neighbors, Side::Right) {
            start = Some(Side::Right);
        }
    } else if vehicle.state.lane_index < LANE_COUNT {
        let right_free = match neighbors.get(Direction::Fr) {
            None => true,
            Some(n) => n.gap >= 120.0 || (n.speed >= profile.desired_speed - 5.0 && n.gap >= 40.0),
        };
        if right_free
            && side_is_safe(vehicle, profile, neighbors, Side::Right)
            && rng.random::<f64>() < profile.keep_right_rate * TICK_SECONDS
        {
            start = Some(Side::Right);
        }
    }

    PolicyAction {
        accel,
        start_lane_change: start,
    }
}

/// Whether a vehicle counts as stuck behind its leader this tick.
pub fn is_blocked(vehicle: &Vehicle, neighbors: &NeighborSet) -> bool {
    let Some(profile) = vehicle.profile.as_ref() else {
        return false;
    };
    neighbors
        .get(Direction::F)
        .is_some_and(|n| n.gap < 100.0 && n.speed < profile.desired_speed - 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::neighbors::Neighbor;
    use crate::sim::vehicle::VehicleState;
    use crate::types::Indicator;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn vehicle(behavior: Behavior, lane: u8, v: f64) -> Vehicle {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        Vehicle {
            state: VehicleState {
                id: 7,
                s: 0.0,
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
            profile: Some(BehaviorProfile::sample(behavior, &mut rng)),
            lane_change: None,
            blocked_for: 0.0,
        }
    }

    fn front(ttc: f64, gap: f64, speed: f64) -> Neighbor {
        Neighbor {
            id: 9,
            gap,
            relative_speed: 0.0,
            speed,
            ttc,
        }
    }

    #[test]
    fn aggressive_overtakes_inside_window() {
        let v = vehicle(Behavior::Aggressive, 2, 140.0);
        let mut nb = NeighborSet::default();
        nb.set(Direction::F, Some(front(2.5, 25.0, 104.0)));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let act = behavior_policy(&v, &nb, &mut rng);
        assert_eq!(act.start_lane_change, Some(Side::Left));
    }

    #[test]
    fn aggressive_does_not_overtake_outside_window() {
        let v = vehicle(Behavior::Aggressive, 2, 140.0);
        let mut nb = NeighborSet::default();
        nb.set(Direction::F, Some(front(3.6, 40.0, 100.0)));
        nb.set(Direction::Fr, Some(front(12.0, 10.0, 140.0)));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let act = behavior_policy(&v, &nb, &mut rng);
        assert_eq!(act.start_lane_change, None);
    }

    #[test]
    fn cautious_with_free_road_only_follows() {
        let v = vehicle(Behavior::Cautious, 3, 90.0);
        let mut nb = NeighborSet::default();
        nb.set(Direction::F, Some(front(12.0, 80.0, 90.0)));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let act = behavior_policy(&v, &nb, &mut rng);
            assert_eq!(act.start_lane_change, None);
        }
    }

    #[test]
    fn blocked_left_lane_prevents_overtake() {
        let v = vehicle(Behavior::Normal, 2, 110.0);
        let mut nb = NeighborSet::default();
        nb.set(Direction::F, Some(front(3.5, 20.0, 90.0)));
        nb.set(Direction::Bl, Some(front(1.0, 5.0, 150.0)));
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let act = behavior_policy(&v, &nb, &mut rng);
        assert_ne!(act.start_lane_change, Some(Side::Left));
    }

    #[test]
    fn follower_brakes_when_closing() {
        let p = BehaviorProfile::sample(Behavior::Normal, &mut ChaCha8Rng::seed_from_u64(0));
        let free = p.follow_accel(30.0, None);
        let close = p.follow_accel(30.0, Some((10.0, 20.0)));
        assert!(close < free);
        assert!(close >= -MAX_BRAKING);
    }
}
