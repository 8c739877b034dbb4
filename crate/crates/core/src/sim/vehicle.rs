use core::fmt;
use core::str::FromStr;

use super::policy::BehaviorProfile;
use super::{lane_center, ANGLE_LIMIT, LANE_COUNT, LANE_WIDTH, SPEED_MAX_KMH};
use crate::types::{Indicator, ParseEnumError, Side};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Behavior {
    Cautious,
    Normal,
    Aggressive,
    Ego,
}

impl Behavior {
    pub fn as_str(self) -> &'static str {
        match self {
            Behavior::Cautious => "cautious",
            Behavior::Normal => "normal",
            Behavior::Aggressive => "aggressive",
            Behavior::Ego => "ego",
        }
    }
}

impl fmt::Display for Behavior {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Behavior {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Behavior::Cautious,
            Behavior::Normal,
            Behavior::Aggressive,
            Behavior::Ego,
        ]
        .into_iter()
        .find(|b| b.as_str().eq_ignore_ascii_case(s))
        .ok_or(ParseEnumError("behavior"))
    }
}

/// Kinematic state of one vehicle.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct VehicleState {
    pub id: u32,
    /// Longitudinal position along the ring (m).
    pub s: f64,
    /// 1..=3, lane 1 leftmost.
    pub lane_index: u8,
    /// Offset from the lane centerline (m), positive left.
    pub lateral_offset: f64,
    /// Speed (km/h).
    pub v: f64,
    /// Longitudinal acceleration (m/s²).
    pub a: f64,
    /// Heading relative to the road (rad), positive left.
    pub heading: f64,
    /// Steering wheel angle (rad), positive left.
    pub steering: f64,
    pub indicator: Indicator,
    pub gear: u8,
    pub behavior: Behavior,
}

impl VehicleState {
    /// Lateral position on the road (m, positive left, lane 1 centre at 0).
    pub fn lateral_position(&self) -> f64 {
        lane_center(self.lane_index) + self.lateral_offset
    }

    /// Sets the lateral position, updating lane index and offset. Positions
    /// beyond the outer lanes are clamped to the road edge.
    pub fn set_lateral_position(&mut self, y: f64) {
        let left_edge = lane_center(1) + LANE_WIDTH / 2.0;
        let right_edge = lane_center(LANE_COUNT) - LANE_WIDTH / 2.0;
        let y = y.clamp(right_edge, left_edge);
        let lane = libm::round(-y / LANE_WIDTH) as i64 + 1;
        let lane = lane.clamp(1, LANE_COUNT as i64) as u8;
        self.lane_index = lane;
        self.lateral_offset = y - lane_center(lane);
    }

    pub fn check(&self) -> Result<(), &'static str> {
        if !(0.0..=SPEED_MAX_KMH).contains(&self.v) {
            return Err("speed outside [0, 220] km/h");
        }
        if !(1..=LANE_COUNT).contains(&self.lane_index) {
            return Err("lane index outside 1..=3");
        }
        if !self.lateral_offset.is_finite() || self.lateral_offset.abs() > LANE_WIDTH {
            return Err("lateral offset exceeds one lane width");
        }
        if !(-ANGLE_LIMIT..=ANGLE_LIMIT).contains(&self.heading) {
            return Err("heading outside [-3.14, 3.14]");
        }
        if !(-ANGLE_LIMIT..=ANGLE_LIMIT).contains(&self.steering) {
            return Err("steering outside [-3.14, 3.14]");
        }
        if !(1..=5).contains(&self.gear) {
            return Err("gear outside 1..=5");
        }
        if !self.s.is_finite() {
            return Err("non-finite position");
        }
        Ok(())
    }
}

/// Gear synthesized from speed bands (the simulator has no transmission).
pub fn gear_for_speed(v_kmh: f64) -> u8 {
    match v_kmh {
        v if v < 20.0 => 1,
        v if v < 40.0 => 2,
        v if v < 60.0 => 3,
        v if v < 90.0 => 4,
        _ => 5,
    }
}

/// An in-progress scripted lane change of a surrounding vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LaneChange {
    pub side: Side,
    pub from_lane: u8,
    pub elapsed: f64,
}

/// A vehicle together with the simulator-side state that drives it.
#[derive(Debug, Clone, PartialEq)]
pub struct Vehicle {
    pub state: VehicleState,
    /// `None` for the ego vehicle.
    pub profile: Option<BehaviorProfile>,
    pub lane_change: Option<LaneChange>,
    /// Seconds spent stuck behind a slower leader.
    pub blocked_for: f64,
}

impl Vehicle {
    pub fn id(&self) -> u32 {
        self.state.id
    }

    pub fn is_ego(&self) -> bool {
        self.state.behavior == Behavior::Ego
    }
}
