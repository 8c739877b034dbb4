use super::world::WorldState;
use super::{kmh_to_ms, ttc, wrap_position, SimError, LANE_COUNT, NEIGHBOR_RANGE, VEHICLE_LENGTH};
use crate::types::Direction;

/// Nearest vehicle in one direction slot.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Neighbor {
    pub id: u32,
    /// Bumper-to-bumper gap (m), in `[0, 250]`.
    pub gap: f64,
    /// Neighbor speed minus ego speed (km/h).
    pub relative_speed: f64,
    /// Neighbor speed (km/h).
    pub speed: f64,
    /// In `[0, 12]`.
    pub ttc: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct NeighborSet {
    slots: [Option<Neighbor>; 6],
}

impl NeighborSet {
    pub fn get(&self, dir: Direction) -> Option<&Neighbor> {
        self.slots[dir.index()].as_ref()
    }

    pub fn set(&mut self, dir: Direction, neighbor: Option<Neighbor>) {
        self.slots[dir.index()] = neighbor;
    }

    /// TTC in a direction, saturated at 12 s for an empty slot.
    pub fn ttc(&self, dir: Direction) -> f64 {
        self.get(dir).map_or(super::TTC_MAX, |n| n.ttc)
    }

    pub fn gap(&self, dir: Direction) -> f64 {
        self.get(dir).map_or(NEIGHBOR_RANGE, |n| n.gap)
    }

    pub fn iter(&self) -> impl Iterator<Item = (Direction, &Neighbor)> {
        Direction::ALL
            .into_iter()
            .filter_map(move |d| self.get(d).map(|n| (d, n)))
    }

    pub fn is_empty(&self) -> bool {
        self.slots.iter().all(Option::is_none)
    }
}

/// Six-direction neighbor query around vehicle `ego_id`.
///
/// Each slot holds the nearest vehicle within 250 m on the ego lane (`f`,
/// `b`) or the adjacent lane (`fl`/`bl` on lane − 1, `fr`/`br` on lane + 1).
/// Slots for lanes that do not exist stay empty.
pub fn neighbors(world: &WorldState, ego_id: u32) -> Result<NeighborSet, SimError> {
    let ego = &world.vehicle(ego_id).ok_or(SimError::UnknownVehicle(ego_id))?.state;
    let road = world.road_length();
    let vehicles = world.vehicles();
    let mut set = NeighborSet::default();

    for dir in Direction::ALL {
        let lane = ego.lane_index as i32 + dir.lane_delta();
        if lane < 1 || lane > LANE_COUNT as i32 {
            continue;
        }
        let members = world.lane_members(lane as u8);
        let n = members.len();
        let pos = members.partition_point(|&i| vehicles[i].state.s < ego.s);
        let mut found: Option<(f64, usize)> = None;
        for k in 0..n {
            let idx = if dir.is_front() {
                members[(pos + k) % n]
            } else {
                members[(pos + n - 1 - k) % n]
            };
            let o = &vehicles[idx].state;
            if o.id == ego.id {
                continue;
            }
            let ahead = wrap_position(o.s - ego.s, road);
            let center_dist = if dir.is_front() { ahead } else { road - ahead };
            match found {
                None => {
                    if (ahead <= road / 2.0) != dir.is_front() {
                        break;
                    }
                    found = Some((center_dist, idx));
                }
                // equal positions: prefer the lower id
                Some((d, best)) if center_dist == d => {
                    if o.id < vehicles[best].state.id {
                        found = Some((d, idx));
                    }
                }
                Some(_) => break,
            }
        }
        let Some((center_dist, idx)) = found else {
            continue;
        };
        let gap = (center_dist - VEHICLE_LENGTH).max(0.0);
        if gap > NEIGHBOR_RANGE {
            continue;
        }
        let speed = vehicles[idx].state.v;
        let closing = if dir.is_front() {
            kmh_to_ms(ego.v - speed)
        } else {
            kmh_to_ms(speed - ego.v)
        };
        set.set(
            dir,
            Some(Neighbor {
                id: vehicles[idx].state.id,
                gap,
                relative_speed: speed - ego.v,
                speed,
                ttc: ttc(gap, closing)?,
            }),
        );
    }
    Ok(set)
}
