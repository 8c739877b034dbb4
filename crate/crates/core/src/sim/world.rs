use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::neighbors::{neighbors, NeighborSet};
use super::policy::{behavior_policy, is_blocked, BehaviorProfile, MAX_BRAKING};
use super::scenario::ScenarioConfig;
use super::vehicle::{gear_for_speed, Behavior, LaneChange, Vehicle, VehicleState};
use super::{
    kmh_to_ms, lane_center, ms_to_kmh, wrap_position, SimError, ANGLE_LIMIT, LANE_CHANGE_SECONDS, LANE_COUNT,
    LANE_WIDTH, SPEED_MAX_KMH, STEERING_RATIO, VEHICLE_LENGTH, WHEELBASE,
};
use crate::types::{Indicator, TICK_SECONDS};

/// Id of the ego vehicle in spawned worlds.
pub const EGO_ID: u32 = 0;

const MIN_SPAWN_GAP: f64 = 20.0;
const EGO_SPAWN_CLEARANCE: f64 = 40.0;
const MAX_EGO_ACCEL: f64 = 4.0;

/// Controls applied to the ego vehicle for one tick.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ControlInput {
    /// Steering wheel angle (rad), positive left.
    pub steering: f64,
    /// Longitudinal acceleration command (m/s²).
    pub accel: f64,
    pub indicator: Indicator,
}

impl ControlInput {
    pub fn neutral() -> Self {
        ControlInput::default()
    }

    /// Clamps into the ranges the simulator accepts; NaN becomes zero.
    pub fn clamped(self) -> Self {
        let finite = |x: f64| if x.is_nan() { 0.0 } else { x };
        ControlInput {
            steering: finite(self.steering).clamp(-ANGLE_LIMIT, ANGLE_LIMIT),
            accel: finite(self.accel).clamp(-MAX_BRAKING, MAX_EGO_ACCEL),
            indicator: self.indicator,
        }
    }
}

/// Complete simulator state. Cloning yields an independent snapshot.
#[derive(Debug, Clone)]
pub struct WorldState {
    tick: u64,
    road_length: f64,
    vehicles: Vec<Vehicle>,
    /// Per lane, vehicle indices sorted by `(s, id)`.
    lanes: [Vec<usize>; LANE_COUNT as usize],
    rng: ChaCha8Rng,
}

impl WorldState {
    /// Builds a world from explicit vehicles. Fails on duplicate ids or
    /// vehicle states that violate their range invariants.
    pub fn new(vehicles: Vec<Vehicle>, road_length: f64, seed: u64) -> Result<Self, SimError> {
        if !(road_length > 0.0) || !road_length.is_finite() {
            return Err(SimError::InvalidScenario(alloc::string::String::from(
                "road length must be positive",
            )));
        }
        let mut world = WorldState {
            tick: 0,
            road_length,
            vehicles,
            lanes: Default::default(),
            rng: ChaCha8Rng::seed_from_u64(seed),
        };
        for v in &mut world.vehicles {
            v.state.s = wrap_position(v.state.s, road_length);
        }
        world.validate()?;
        world.reindex();
        Ok(world)
    }

    /// Spawns the ego (id 0, lane 2, s = 0) and the configured surrounding
    /// traffic, uniformly along the ring with at least 20 m gaps per lane.
    pub fn spawn(config: &ScenarioConfig) -> Result<Self, SimError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let mut behaviors: Vec<Behavior> = config
            .behavior_mix
            .apportion(config.vehicle_count)
            .iter()
            .flat_map(|&(b, n)| core::iter::repeat_n(b, n))
            .collect();
        // Fisher-Yates so lanes and positions are not grouped by class
        for i in (1..behaviors.len()).rev() {
            let j = rng.random_range(0..=i);
            behaviors.swap(i, j);
        }

        let mut vehicles = Vec::with_capacity(behaviors.len() + 1);
        vehicles.push(Vehicle {
            state: VehicleState {
                id: EGO_ID,
                s: 0.0,
                lane_index: 2,
                lateral_offset: 0.0,
                v: config.ego_initial_speed,
                a: 0.0,
                heading: 0.0,
                steering: 0.0,
                indicator: Indicator::Off,
                gear: gear_for_speed(config.ego_initial_speed),
                behavior: Behavior::Ego,
            },
            profile: None,
            lane_change: None,
            blocked_for: 0.0,
        });

        let road = config.road_length;
        for (k, behavior) in behaviors.into_iter().enumerate() {
            let profile = BehaviorProfile::sample(behavior, &mut rng);
            let mut placed = None;
            for _ in 0..1000 {
                let lane = rng.random_range(1..=LANE_COUNT);
                let s = rng.random_range(0.0..road);
                let clear = vehicles.iter().all(|other: &Vehicle| {
                    let d = wrap_position(other.state.s - s, road);
                    let d = d.min(road - d);
                    if other.is_ego() {
                        d >= EGO_SPAWN_CLEARANCE
                    } else {
                        other.state.lane_index != lane || d >= MIN_SPAWN_GAP + VEHICLE_LENGTH
                    }
                });
                if clear {
                    placed = Some((lane, s));
                    break;
                }
            }
            let Some((lane, s)) = placed else {
                return Err(SimError::InvalidScenario(alloc::format!(
                    "could not place {} vehicles on a {} m road",
                    config.vehicle_count,
                    road
                )));
            };
            let v = profile.desired_speed * rng.random_range(0.9..1.0);
            vehicles.push(Vehicle {
                state: VehicleState {
                    id: k as u32 + 1,
                    s,
                    lane_index: lane,
                    lateral_offset: 0.0,
                    v,
                    a: 0.0,
                    heading: 0.0,
                    steering: 0.0,
                    indicator: Indicator::Off,
                    gear: gear_for_speed(v),
                    behavior,
                },
                profile: Some(profile),
                lane_change: None,
                blocked_for: 0.0,
            });
        }
        // traffic decisions use a stream independent of the spawn draws
        WorldState::new(vehicles, road, config.seed ^ 0x5eed_7aff_1c00_0000)
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    /// Simulated time in seconds.
    pub fn time(&self) -> f64 {
        self.tick as f64 * TICK_SECONDS
    }

    pub fn road_length(&self) -> f64 {
        self.road_length
    }

    pub fn vehicles(&self) -> &[Vehicle] {
        &self.vehicles
    }

    pub fn vehicle(&self, id: u32) -> Option<&Vehicle> {
        self.vehicles.iter().find(|v| v.state.id == id)
    }

    pub fn ego(&self) -> Option<&Vehicle> {
        self.vehicles.iter().find(|v| v.is_ego())
    }

    /// Indices of the vehicles in `lane`, sorted by position.
    pub(crate) fn lane_members(&self, lane: u8) -> &[usize] {
        &self.lanes[(lane - 1) as usize]
    }

    pub fn neighbors(&self, id: u32) -> Result<NeighborSet, SimError> {
        neighbors(self, id)
    }

    fn validate(&self) -> Result<(), SimError> {
        let mut ids: Vec<u32> = self.vehicles.iter().map(|v| v.state.id).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(SimError::DuplicateVehicleId(w[0]));
        }
        for v in &self.vehicles {
            v.state
                .check()
                .map_err(|reason| SimError::InvalidState { id: v.state.id, reason })?;
        }
        Ok(())
    }

    fn reindex(&mut self) {
        for lane in &mut self.lanes {
            lane.clear();
        }
        for (i, v) in self.vehicles.iter().enumerate() {
            self.lanes[(v.state.lane_index - 1) as usize].push(i);
        }
        let vehicles = &self.vehicles;
        for lane in &mut self.lanes {
            lane.sort_by(|&a, &b| {
                let (va, vb) = (&vehicles[a].state, &vehicles[b].state);
                va.s.total_cmp(&vb.s).then(va.id.cmp(&vb.id))
            });
        }
    }

    /// Advances every vehicle by one tick (1/20 s). Surrounding vehicles act
    /// on the pre-step snapshot; the ego follows `ego_controls`.
    pub fn step(&mut self, ego_controls: &ControlInput) -> Result<(), SimError> {
        let controls = ego_controls.clamped();
        let dt = TICK_SECONDS;

        let mut actions = Vec::with_capacity(self.vehicles.len());
        let mut blocked = Vec::with_capacity(self.vehicles.len());
        for i in 0..self.vehicles.len() {
            let vehicle = &self.vehicles[i];
            if vehicle.is_ego() {
                actions.push(None);
                blocked.push(false);
                continue;
            }
            let nb = neighbors(self, vehicle.state.id)?;
            blocked.push(is_blocked(vehicle, &nb));
            let action = behavior_policy(vehicle, &nb, &mut self.rng);
            actions.push(Some(action));
        }

        let road = self.road_length;
        for (vehicle, (action, blocked)) in self.vehicles.iter_mut().zip(actions.into_iter().zip(blocked)) {
            match action {
                None => advance_ego(&mut vehicle.state, &controls, road, dt),
                Some(action) => {
                    vehicle.blocked_for = if blocked { vehicle.blocked_for + dt } else { 0.0 };
                    if let Some(side) = action.start_lane_change {
                        vehicle.lane_change = Some(LaneChange {
                            side,
                            from_lane: vehicle.state.lane_index,
                            elapsed: 0.0,
                        });
                        vehicle.state.indicator = side.indicator();
                        vehicle.blocked_for = 0.0;
                    }
                    advance_scripted(vehicle, action.accel, road, dt);
                }
            }
            vehicle.state.gear = gear_for_speed(vehicle.state.v);
        }

        self.tick += 1;
        self.reindex();
        Ok(())
    }
}

fn advance_longitudinal(state: &mut VehicleState, accel: f64, dt: f64) -> f64 {
    let v = kmh_to_ms(state.v);
    let v_next = (v + accel * dt).clamp(0.0, kmh_to_ms(SPEED_MAX_KMH));
    state.a = (v_next - v) / dt;
    state.v = ms_to_kmh(v_next);
    v
}

fn advance_scripted(vehicle: &mut Vehicle, accel: f64, road: f64, dt: f64) {
    let state = &mut vehicle.state;
    let v = advance_longitudinal(state, accel, dt);
    state.s = wrap_position(state.s + v * dt, road);

    let Some(mut lc) = vehicle.lane_change else {
        return;
    };
    lc.elapsed += dt;
    let old_heading = state.heading;
    let from = lane_center(lc.from_lane);
    let sign = lc.side.sign();
    if lc.elapsed >= LANE_CHANGE_SECONDS - 1e-9 {
        let target = (lc.from_lane as i32 + lc.side.lane_delta()) as u8;
        state.set_lateral_position(lane_center(target));
        state.heading = 0.0;
        state.steering = 0.0;
        state.indicator = Indicator::Off;
        vehicle.lane_change = None;
        return;
    }
    let phase = PI * lc.elapsed / LANE_CHANGE_SECONDS;
    let y = from + sign * LANE_WIDTH * (1.0 - libm::cos(phase)) / 2.0;
    let y_rate = sign * LANE_WIDTH * PI / (2.0 * LANE_CHANGE_SECONDS) * libm::sin(phase);
    state.set_lateral_position(y);
    state.heading = libm::atan2(y_rate, v.max(0.1));
    let yaw_rate = (state.heading - old_heading) / dt;
    state.steering = (STEERING_RATIO * libm::atan(WHEELBASE * yaw_rate / v.max(0.1))).clamp(-ANGLE_LIMIT, ANGLE_LIMIT);
    vehicle.lane_change = Some(lc);
}

/// Kinematic bicycle model driven by the steering wheel angle.
fn advance_ego(state: &mut VehicleState, controls: &ControlInput, road: f64, dt: f64) {
    let v = advance_longitudinal(state, controls.accel, dt);
    let heading = state.heading;
    state.s = wrap_position(state.s + v * libm::cos(heading) * dt, road);
    let y = state.lateral_position() + v * libm::sin(heading) * dt;
    state.set_lateral_position(y);
    let at_left_edge = state.lane_index == 1 && state.lateral_offset >= LANE_WIDTH / 2.0;
    let at_right_edge = state.lane_index == LANE_COUNT && state.lateral_offset <= -LANE_WIDTH / 2.0;

    let yaw_rate = v / WHEELBASE * libm::tan(controls.steering / STEERING_RATIO);
    let mut next = heading + yaw_rate * dt;
    if (at_left_edge && next > 0.0) || (at_right_edge && next < 0.0) {
        next = 0.0;
    }
    state.heading = next.clamp(-ANGLE_LIMIT, ANGLE_LIMIT);
    state.steering = controls.steering;
    state.indicator = controls.indicator;
}
