//! Directional collision warnings and maneuver approvals.
//!
//! [`evaluate`] compares the six TTCs against the threshold row of the
//! predicted intention. [`DisplaySet`] keeps the events that are on screen,
//! suppresses re-triggers while a direction is already warned, and lets a
//! warning drop any approval.

use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use crate::features::FeatureVector;
use crate::sim::NeighborSet;
use crate::types::{Direction, Intention, ParseEnumError};

/// Display lifetime of every event (2 s at 20 Hz).
pub const EVENT_LIFETIME_TICKS: u64 = 40;

/// Added to warning thresholds to get approval thresholds.
pub const APPROVAL_MARGIN: f64 = 2.0;

/// Anything that can report a TTC per direction.
pub trait TtcSource {
    fn ttc(&self, dir: Direction) -> f64;
}

impl TtcSource for NeighborSet {
    fn ttc(&self, dir: Direction) -> f64 {
        NeighborSet::ttc(self, dir)
    }
}

impl TtcSource for FeatureVector {
    fn ttc(&self, dir: Direction) -> f64 {
        FeatureVector::ttc(self, dir)
    }
}

/// Indexed by [`Direction::index`].
impl TtcSource for [f64; 6] {
    fn ttc(&self, dir: Direction) -> f64 {
        self[dir.index()]
    }
}

/// Set of directions as a bit mask over [`Direction::index`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct DirectionSet(u8);

impl DirectionSet {
    pub const EMPTY: DirectionSet = DirectionSet(0);

    pub fn from_slice(dirs: &[Direction]) -> Self {
        let mut s = DirectionSet::EMPTY;
        for &d in dirs {
            s.insert(d);
        }
        s
    }

    pub fn insert(&mut self, d: Direction) {
        self.0 |= 1 << d.index();
    }

    pub fn contains(self, d: Direction) -> bool {
        self.0 & (1 << d.index()) != 0
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: DirectionSet) -> DirectionSet {
        DirectionSet(self.0 | other.0)
    }

    pub fn difference(self, other: DirectionSet) -> DirectionSet {
        DirectionSet(self.0 & !other.0)
    }

    pub fn iter(self) -> impl Iterator<Item = Direction> {
        Direction::ALL.into_iter().filter(move |&d| self.contains(d))
    }

    pub fn bits(self) -> u8 {
        self.0
    }
}

/// Directions joined with `|`, in [`Direction::ALL`] order.
impl fmt::Display for DirectionSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.iter().enumerate() {
            if i > 0 {
                f.write_str("|")?;
            }
            f.write_str(d.as_str())?;
        }
        Ok(())
    }
}

impl FromStr for DirectionSet {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = DirectionSet::EMPTY;
        for part in s.split('|').filter(|p| !p.is_empty()) {
            set.insert(part.trim().parse()?);
        }
        Ok(set)
    }
}

#[cfg(feature = "serde")]
impl serde::Serialize for DirectionSet {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        use serde::ser::SerializeSeq;
        let mut seq = s.serialize_seq(Some(self.len()))?;
        for d in self.iter() {
            seq.serialize_element(&d)?;
        }
        seq.end()
    }
}

#[cfg(feature = "serde")]
impl<'de> serde::Deserialize<'de> for DirectionSet {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let dirs = <Vec<Direction>>::deserialize(d)?;
        Ok(DirectionSet::from_slice(&dirs))
    }
}

/// Per intention and direction TTC thresholds (s); `None` where a direction
/// is not monitored for that intention.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdTable {
    pub warning: [[Option<f64>; 6]; 3],
    pub approval: [[Option<f64>; 6]; 3],
}

impl ThresholdTable {
    /// Builds a table whose approval entries are `warning + 2 s`.
    pub fn from_warning(warning: [[Option<f64>; 6]; 3]) -> Self {
        let approval = warning.map(|row| row.map(|t| t.map(|t| t + APPROVAL_MARGIN)));
        ThresholdTable { warning, approval }
    }

    /// The deployed table: LK watches f, b, fl, bl; LCL watches f, b, fl,
    /// bl; LCR watches f, b, fr, br.
    pub fn standard() -> Self {
        let mut w = [[None; 6]; 3];
        let mut set = |i: Intention, d: Direction, t: f64| w[i.index()][d.index()] = Some(t);
        use Direction::*;
        use Intention::*;
        set(Lk, F, 4.0);
        set(Lk, B, 3.0);
        set(Lk, Fl, 3.5);
        set(Lk, Bl, 3.5);
        set(Lcl, F, 4.5);
        set(Lcl, B, 4.0);
        set(Lcl, Fl, 5.5);
        set(Lcl, Bl, 5.5);
        set(Lcr, F, 4.5);
        set(Lcr, B, 4.0);
        set(Lcr, Fr, 5.5);
        set(Lcr, Br, 5.5);
        ThresholdTable::from_warning(w)
    }

    pub fn warning_threshold(&self, i: Intention, d: Direction) -> Option<f64> {
        self.warning[i.index()][d.index()]
    }

    pub fn approval_threshold(&self, i: Intention, d: Direction) -> Option<f64> {
        self.approval[i.index()][d.index()]
    }

    /// Directions with a warning threshold for `i`.
    pub fn monitored(&self, i: Intention) -> DirectionSet {
        let mut s = DirectionSet::EMPTY;
        for d in Direction::ALL {
            if self.warning_threshold(i, d).is_some() {
                s.insert(d);
            }
        }
        s
    }
}

impl Default for ThresholdTable {
    fn default() -> Self {
        ThresholdTable::standard()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum EventKind {
    Warning,
    Approval,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Warning => "warning",
            EventKind::Approval => "approval",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = ParseEnumError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "warning" => Ok(EventKind::Warning),
            "approval" => Ok(EventKind::Approval),
            _ => Err(ParseEnumError("event kind")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct WarningEvent {
    pub kind: EventKind,
    pub intention: Intention,
    pub directions: DirectionSet,
    pub issued_tick: u64,
    pub expires_tick: u64,
    pub audio: bool,
}

impl WarningEvent {
    pub fn new(kind: EventKind, intention: Intention, directions: DirectionSet, tick: u64) -> Self {
        WarningEvent {
            kind,
            intention,
            directions,
            issued_tick: tick,
            expires_tick: tick + EVENT_LIFETIME_TICKS,
            audio: kind == EventKind::Warning,
        }
    }

    pub fn is_active(&self, now: u64) -> bool {
        self.issued_tick <= now && now < self.expires_tick
    }

    pub fn remaining(&self, now: u64) -> u64 {
        self.expires_tick.saturating_sub(now)
    }
}

/// Warning for every monitored direction with `TTC < threshold`; if there
/// is none, an approval when every monitored direction has
/// `TTC >= threshold + 2`; otherwise nothing.
pub fn evaluate(
    intention: Intention,
    ttcs: &impl TtcSource,
    table: &ThresholdTable,
    tick: u64,
) -> Option<WarningEvent> {
    let mut warned = DirectionSet::EMPTY;
    let mut approved = true;
    for d in Direction::ALL {
        let t = ttcs.ttc(d);
        if let Some(w) = table.warning_threshold(intention, d) {
            if t < w {
                warned.insert(d);
            }
        }
        if let Some(a) = table.approval_threshold(intention, d) {
            approved &= t >= a;
        }
    }
    if !warned.is_empty() {
        Some(WarningEvent::new(EventKind::Warning, intention, warned, tick))
    } else if approved {
        Some(WarningEvent::new(
            EventKind::Approval,
            intention,
            table.monitored(intention),
            tick,
        ))
    } else {
        None
    }
}

/// Events currently on display.
#[derive(Debug, Clone, Default)]
pub struct DisplaySet {
    active: Vec<WarningEvent>,
}

impl DisplaySet {
    pub fn new() -> Self {
        DisplaySet::default()
    }

    /// Drops events whose lifetime ended at or before `now`.
    pub fn expire(&mut self, now: u64) {
        self.active.retain(|e| e.expires_tick > now);
    }

    pub fn active(&self) -> &[WarningEvent] {
        &self.active
    }

    /// Directions covered by active warnings.
    pub fn warned_directions(&self) -> DirectionSet {
        self.active
            .iter()
            .filter(|e| e.kind == EventKind::Warning)
            .fold(DirectionSet::EMPTY, |acc, e| acc.union(e.directions))
    }

    pub fn has_warning(&self) -> bool {
        self.active.iter().any(|e| e.kind == EventKind::Warning)
    }

    pub fn approval(&self) -> Option<&WarningEvent> {
        self.active.iter().find(|e| e.kind == EventKind::Approval)
    }

    /// Offers a freshly evaluated event at its issue tick and returns the
    /// event actually emitted, if any.
    ///
    /// A warning is trimmed to directions not already warned and suppressed
    /// when nothing is left; an emitted warning removes every approval. An
    /// approval is suppressed while any warning or an approval for the same
    /// intention is active, and replaces an approval for another intention.
    pub fn offer(&mut self, event: WarningEvent) -> Option<WarningEvent> {
        self.expire(event.issued_tick);
        match event.kind {
            EventKind::Warning => {
                let fresh = event.directions.difference(self.warned_directions());
                if fresh.is_empty() {
                    return None;
                }
                let emitted = WarningEvent {
                    directions: fresh,
                    ..event
                };
                self.active.retain(|e| e.kind == EventKind::Warning);
                self.active.push(emitted);
                Some(emitted)
            }
            EventKind::Approval => {
                if self.has_warning() {
                    return None;
                }
                if self.approval().is_some_and(|a| a.intention == event.intention) {
                    return None;
                }
                self.active.clear();
                self.active.push(event);
                Some(event)
            }
        }
    }
}
