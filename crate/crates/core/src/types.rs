use core::fmt;
use core::str::FromStr;

/// Simulation and acquisition rate.
pub const TICK_HZ: u32 = 20;
/// Duration of one tick in seconds.
pub const TICK_SECONDS: f64 = 1.0 / TICK_HZ as f64;

/// Converts a duration in seconds to whole ticks (rounded to nearest).
pub fn seconds_to_ticks(seconds: f64) -> u64 {
    libm::round(seconds * TICK_HZ as f64) as u64
}

/// Neighbor slot around the ego vehicle.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Direction {
    F,
    B,
    Fl,
    Bl,
    Fr,
    Br,
}

impl Direction {
    pub const ALL: [Direction; 6] = [
        Direction::F,
        Direction::B,
        Direction::Fl,
        Direction::Bl,
        Direction::Fr,
        Direction::Br,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Direction::F => "f",
            Direction::B => "b",
            Direction::Fl => "fl",
            Direction::Bl => "bl",
            Direction::Fr => "fr",
            Direction::Br => "br",
        }
    }

    pub fn is_front(self) -> bool {
        matches!(self, Direction::F | Direction::Fl | Direction::Fr)
    }

    /// Lateral side of the slot, `None` for the ego lane.
    pub fn side(self) -> Option<Side> {
        match self {
            Direction::F | Direction::B => None,
            Direction::Fl | Direction::Bl => Some(Side::Left),
            Direction::Fr | Direction::Br => Some(Side::Right),
        }
    }

    /// Lane offset of the slot relative to the ego lane (lane 1 is leftmost).
    pub fn lane_delta(self) -> i32 {
        match self.side() {
            None => 0,
            Some(Side::Left) => -1,
            Some(Side::Right) => 1,
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Direction {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Direction::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s))
            .ok_or(ParseEnumError("direction"))
    }
}

/// Lateral side of a lane change.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Side {
    Left,
    Right,
}

impl Side {
    /// Change in lane index when moving to this side.
    pub fn lane_delta(self) -> i32 {
        match self {
            Side::Left => -1,
            Side::Right => 1,
        }
    }

    /// +1 for left, -1 for right (positive lateral axis points left).
    pub fn sign(self) -> f64 {
        match self {
            Side::Left => 1.0,
            Side::Right => -1.0,
        }
    }

    pub fn intention(self) -> Intention {
        match self {
            Side::Left => Intention::Lcl,
            Side::Right => Intention::Lcr,
        }
    }

    pub fn indicator(self) -> Indicator {
        match self {
            Side::Left => Indicator::Left,
            Side::Right => Indicator::Right,
        }
    }
}

/// Maneuver class: lane keep, lane change left, lane change right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "UPPERCASE"))]
pub enum Intention {
    #[default]
    Lk = 0,
    Lcl = 1,
    Lcr = 2,
}

impl Intention {
    /// Also the tie-break priority order (LK first).
    pub const ALL: [Intention; 3] = [Intention::Lk, Intention::Lcl, Intention::Lcr];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Intention> {
        Intention::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Intention::Lk => "LK",
            Intention::Lcl => "LCL",
            Intention::Lcr => "LCR",
        }
    }

    pub fn side(self) -> Option<Side> {
        match self {
            Intention::Lk => None,
            Intention::Lcl => Some(Side::Left),
            Intention::Lcr => Some(Side::Right),
        }
    }
}

impl fmt::Display for Intention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Intention {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Intention::ALL
            .into_iter()
            .find(|i| i.as_str().eq_ignore_ascii_case(s))
            .ok_or(ParseEnumError("intention"))
    }
}

/// Turn indicator state, encoded 0 = off, 1 = left, 2 = right.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Indicator {
    #[default]
    Off = 0,
    Left = 1,
    Right = 2,
}

impl Indicator {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: i64) -> Option<Indicator> {
        match code {
            0 => Some(Indicator::Off),
            1 => Some(Indicator::Left),
            2 => Some(Indicator::Right),
            _ => None,
        }
    }

    pub fn side(self) -> Option<Side> {
        match self {
            Indicator::Off => None,
            Indicator::Left => Some(Side::Left),
            Indicator::Right => Some(Side::Right),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParseEnumError(pub &'static str);

impl fmt::Display for ParseEnumError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid {} name", self.0)
    }
}

impl core::error::Error for ParseEnumError {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn direction_names_round_trip() {
        for d in Direction::ALL {
            assert_eq!(d.as_str().parse::<Direction>(), Ok(d));
        }
        assert!("x".parse::<Direction>().is_err());
    }

    #[test]
    fn left_slots_point_to_lower_lane_index() {
        assert_eq!(Direction::Fl.lane_delta(), -1);
        assert_eq!(Direction::Br.lane_delta(), 1);
        assert_eq!(Side::Left.intention(), Intention::Lcl);
    }

    #[test]
    fn tick_conversion() {
        assert_eq!(seconds_to_ticks(2.0), 40);
        assert_eq!(seconds_to_ticks(2.5), 50);
    }
}
