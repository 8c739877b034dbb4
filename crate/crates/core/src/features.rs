//! The 24-input feature vector consumed by the intention classifier.

use crate::sim::{
    gear_for_speed, NeighborSet, SimError, WorldState, ANGLE_LIMIT, LANE_COUNT, NEIGHBOR_RANGE, SPEED_MAX_KMH, TTC_MAX,
};
use crate::types::Direction;

pub const FEATURE_COUNT: usize = 24;
/// Real-valued features (categories 1 to 6); these are fuzzified.
pub const CONTINUOUS_COUNT: usize = 21;

/// Neighbor order used inside the vector.
pub const NEIGHBOR_ORDER: [Direction; 6] = [
    Direction::F,
    Direction::Fl,
    Direction::Fr,
    Direction::Bl,
    Direction::Br,
    Direction::B,
];

/// Column names in vector order; also the feature-log header.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "v_ego", "v_f", "v_fl", "v_fr", "v_bl", "v_br", "v_b", "d_f", "d_fl", "d_fr", "d_bl", "d_br", "d_b", "TTC_f",
    "TTC_fl", "TTC_fr", "TTC_bl", "TTC_br", "TTC_b", "alpha", "S", "Ln", "I", "G",
];

/// Value range of each continuous feature, in vector order.
pub fn continuous_range(index: usize) -> (f64, f64) {
    match index {
        0..=6 => (0.0, SPEED_MAX_KMH),
        7..=12 => (0.0, NEIGHBOR_RANGE),
        13..=18 => (0.0, TTC_MAX),
        19 | 20 => (-ANGLE_LIMIT, ANGLE_LIMIT),
        _ => panic!("continuous feature index {index} out of range"),
    }
}

/// Ego state and six-direction surroundings for one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureVector {
    /// km/h
    pub v_ego: f64,
    /// Neighbor speeds (km/h) in [`NEIGHBOR_ORDER`].
    pub speeds: [f64; 6],
    /// Gaps (m) in [`NEIGHBOR_ORDER`].
    pub gaps: [f64; 6],
    /// TTCs (s) in [`NEIGHBOR_ORDER`].
    pub ttcs: [f64; 6],
    /// Heading angle (rad).
    pub alpha: f64,
    /// Steering wheel angle (rad).
    pub steering: f64,
    pub lane: u8,
    pub indicator: u8,
    pub gear: u8,
}

fn slot(dir: Direction) -> usize {
    NEIGHBOR_ORDER.iter().position(|&d| d == dir).unwrap()
}

impl FeatureVector {
    pub fn speed(&self, dir: Direction) -> f64 {
        self.speeds[slot(dir)]
    }

    pub fn gap(&self, dir: Direction) -> f64 {
        self.gaps[slot(dir)]
    }

    pub fn ttc(&self, dir: Direction) -> f64 {
        self.ttcs[slot(dir)]
    }

    /// The 21 real-valued features in vector order.
    pub fn continuous(&self) -> [f64; CONTINUOUS_COUNT] {
        let mut out = [0.0; CONTINUOUS_COUNT];
        out[0] = self.v_ego;
        out[1..7].copy_from_slice(&self.speeds);
        out[7..13].copy_from_slice(&self.gaps);
        out[13..19].copy_from_slice(&self.ttcs);
        out[19] = self.alpha;
        out[20] = self.steering;
        out
    }

    /// All 24 values in vector order; integer features as floats.
    pub fn to_array(&self) -> [f64; FEATURE_COUNT] {
        let mut out = [0.0; FEATURE_COUNT];
        out[..CONTINUOUS_COUNT].copy_from_slice(&self.continuous());
        out[21] = self.lane as f64;
        out[22] = self.indicator as f64;
        out[23] = self.gear as f64;
        out
    }

    /// Inverse of [`to_array`](Self::to_array); the result is clipped.
    pub fn from_array(values: &[f64; FEATURE_COUNT]) -> Self {
        let mut speeds = [0.0; 6];
        let mut gaps = [0.0; 6];
        let mut ttcs = [0.0; 6];
        speeds.copy_from_slice(&values[1..7]);
        gaps.copy_from_slice(&values[7..13]);
        ttcs.copy_from_slice(&values[13..19]);
        let int = |x: f64, lo: u8, hi: u8| {
            if x.is_nan() {
                lo
            } else {
                libm::round(x).clamp(lo as f64, hi as f64) as u8
            }
        };
        FeatureVector {
            v_ego: values[0],
            speeds,
            gaps,
            ttcs,
            alpha: values[19],
            steering: values[20],
            lane: int(values[21], 1, LANE_COUNT),
            indicator: int(values[22], 0, 2),
            gear: int(values[23], 1, 5),
        }
        .clipped()
    }

    /// Clips every field into its range. Idempotent.
    pub fn clipped(mut self) -> Self {
        let clip = |x: f64, (lo, hi): (f64, f64)| if x.is_nan() { lo } else { x.clamp(lo, hi) };
        self.v_ego = clip(self.v_ego, continuous_range(0));
        for i in 0..6 {
            self.speeds[i] = clip(self.speeds[i], continuous_range(1));
            self.gaps[i] = clip(self.gaps[i], continuous_range(7));
            self.ttcs[i] = clip(self.ttcs[i], continuous_range(13));
        }
        self.alpha = clip(self.alpha, continuous_range(19));
        self.steering = clip(self.steering, continuous_range(20));
        self.lane = self.lane.clamp(1, LANE_COUNT);
        self.indicator = self.indicator.min(2);
        self.gear = self.gear.clamp(1, 5);
        self
    }

    /// Builds the vector from an ego state and its neighbor set. Empty slots
    /// read as "no threat": gap 250 m, TTC 12 s, speed equal to the ego's.
    pub fn from_parts(ego: &crate::sim::VehicleState, nb: &NeighborSet) -> Self {
        let v_ego = ego.v;
        let mut speeds = [v_ego; 6];
        let mut gaps = [NEIGHBOR_RANGE; 6];
        let mut ttcs = [TTC_MAX; 6];
        for (i, dir) in NEIGHBOR_ORDER.into_iter().enumerate() {
            if let Some(n) = nb.get(dir) {
                speeds[i] = n.speed;
                gaps[i] = n.gap;
                ttcs[i] = n.ttc;
            }
        }
        FeatureVector {
            v_ego,
            speeds,
            gaps,
            ttcs,
            alpha: ego.heading,
            steering: ego.steering,
            lane: ego.lane_index,
            indicator: ego.indicator.code(),
            gear: gear_for_speed(v_ego.clamp(0.0, SPEED_MAX_KMH)),
        }
        .clipped()
    }
}

/// Extracts the feature vector of vehicle `ego_id` from a world snapshot.
pub fn extract(world: &WorldState, ego_id: u32) -> Result<FeatureVector, SimError> {
    let ego = &world.vehicle(ego_id).ok_or(SimError::UnknownVehicle(ego_id))?.state;
    let nb = world.neighbors(ego_id)?;
    Ok(FeatureVector::from_parts(ego, &nb))
}
