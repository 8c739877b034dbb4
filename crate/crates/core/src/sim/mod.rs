//! Fixed-step kinematic simulation of a unidirectional three-lane highway.
//!
//! The road is a straight ring of configurable length: vehicles leaving the
//! end re-enter at the start, so the vehicle count never changes mid-run.
//! Lane 1 is the leftmost lane; the lateral axis points left, so a positive
//! `lateral_offset` or `heading` means "towards lane 1".

mod neighbors;
pub mod policy;
mod scenario;
mod vehicle;
mod world;

use alloc::string::String;
use core::fmt;

pub use neighbors::{neighbors, Neighbor, NeighborSet};
pub use policy::{behavior_policy, BehaviorProfile, PolicyAction};
pub use scenario::{BehaviorMix, ScenarioConfig, Weather};
pub use vehicle::{gear_for_speed, Behavior, LaneChange, Vehicle, VehicleState};
pub use world::{ControlInput, WorldState, EGO_ID};

pub const LANE_COUNT: u8 = 3;
pub const LANE_WIDTH: f64 = 3.5;
pub const VEHICLE_LENGTH: f64 = 4.5;
pub const WHEELBASE: f64 = 2.7;
/// Steering wheel angle per road wheel angle.
pub const STEERING_RATIO: f64 = 15.0;
/// Neighbor detection range and saturation value of gap features (m).
pub const NEIGHBOR_RANGE: f64 = 250.0;
/// Saturation value of every TTC (s).
pub const TTC_MAX: f64 = 12.0;
pub const SPEED_MAX_KMH: f64 = 220.0;
/// Bound for heading and steering angles (rad). Exactly 3.14, not pi.
#[allow(clippy::approx_constant)]
pub const ANGLE_LIMIT: f64 = 3.14;
/// Duration of a surrounding-vehicle lane change (s), same value the labeler
/// uses for indicator-less lane changes.
pub const LANE_CHANGE_SECONDS: f64 = 2.5;

#[derive(Debug, Clone, PartialEq)]
pub enum SimError {
    NegativeGap(f64),
    DuplicateVehicleId(u32),
    UnknownVehicle(u32),
    InvalidState { id: u32, reason: &'static str },
    InvalidScenario(String),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::NegativeGap(g) => write!(f, "gap must be non-negative, got {g}"),
            SimError::DuplicateVehicleId(id) => write!(f, "vehicle id {id} appears twice"),
            SimError::UnknownVehicle(id) => write!(f, "no vehicle with id {id}"),
            SimError::InvalidState { id, reason } => write!(f, "vehicle {id}: {reason}"),
            SimError::InvalidScenario(msg) => write!(f, "invalid scenario: {msg}"),
        }
    }
}

impl core::error::Error for SimError {}

/// Time to collision for a longitudinal gap (m) closing at `closing_speed` (m/s).
///
/// Non-closing pairs saturate at [`TTC_MAX`]; the result is always in
/// `[0, TTC_MAX]`.
pub fn ttc(gap: f64, closing_speed: f64) -> Result<f64, SimError> {
    if gap.is_nan() || gap < 0.0 {
        return Err(SimError::NegativeGap(gap));
    }
    if closing_speed > 0.0 {
        Ok((gap / closing_speed).clamp(0.0, TTC_MAX))
    } else {
        Ok(TTC_MAX)
    }
}

pub fn kmh_to_ms(v: f64) -> f64 {
    v / 3.6
}

pub fn ms_to_kmh(v: f64) -> f64 {
    v * 3.6
}

/// Maps a longitudinal position onto `[0, road_length)`.
pub fn wrap_position(s: f64, road_length: f64) -> f64 {
    let r = libm::fmod(s, road_length);
    if r < 0.0 {
        r + road_length
    } else {
        r
    }
}

/// Lateral position (positive left) of a lane centerline; lane 1 sits at 0.
pub fn lane_center(lane_index: u8) -> f64 {
    -((lane_index as f64) - 1.0) * LANE_WIDTH
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ttc_examples() {
        assert_eq!(ttc(30.0, 10.0).unwrap(), 3.0);
        assert_eq!(ttc(30.0, 0.0).unwrap(), 12.0);
        assert_eq!(ttc(30.0, -4.0).unwrap(), 12.0);
        assert_eq!(ttc(300.0, 10.0).unwrap(), 12.0);
        assert_eq!(ttc(0.0, 5.0).unwrap(), 0.0);
    }

    #[test]
    fn ttc_rejects_negative_gap() {
        assert_eq!(ttc(-1.0, 3.0), Err(SimError::NegativeGap(-1.0)));
        assert!(ttc(f64::NAN, 3.0).is_err());
    }

    proptest! {
        #[test]
        fn ttc_is_monotone_and_bounded(
            g1 in 0.0f64..400.0, g2 in 0.0f64..400.0,
            c1 in -50.0f64..50.0, c2 in -50.0f64..50.0,
        ) {
            let (glo, ghi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            let (clo, chi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
            let t = ttc(glo, clo).unwrap();
            prop_assert!((0.0..=TTC_MAX).contains(&t));
            prop_assert!(ttc(glo, clo).unwrap() <= ttc(ghi, clo).unwrap());
            prop_assert!(ttc(glo, chi).unwrap() <= ttc(glo, clo).unwrap());
        }
    }
}
