//! Offline maneuver labels for a recorded log.
//!
//! A lane change is recognised at the first tick spent in the new lane (the
//! crossing tick `k`). Its label interval is half-open, `[start, k)`:
//!
//! * with indicator: `start` is the onset of the latest run of the matching
//!   indicator inside the lookback window `[k - 200, k)` (10 s);
//! * without: `start = k - 50` (2.5 s).
//!
//! Windows never reach back past the previous crossing tick or the start of
//! the log. Everything outside an interval is LK, including aborted changes.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::features::FeatureVector;
use crate::types::{seconds_to_ticks, Intention, Side, TICK_SECONDS};

/// Default lane-change duration when no indicator was used (s).
pub const T_CHANGE_DEFAULT: f64 = 2.5;
/// Indicator onset lookback cap (s).
pub const INDICATOR_LOOKBACK: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelError {
    /// Lane index changed by more than one lane between `tick - 1` and `tick`.
    LaneJump { tick: usize, from: u8, to: u8 },
    /// Lane and indicator columns differ in length.
    LengthMismatch,
}

impl fmt::Display for LabelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelError::LaneJump { tick, from, to } => {
                write!(f, "malformed log: lane jumps from {from} to {to} at tick {tick}")
            }
            LabelError::LengthMismatch => f.write_str("lane and indicator columns differ in length"),
        }
    }
}

impl core::error::Error for LabelError {}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ManeuverLabel {
    /// First labeled tick.
    pub start: usize,
    /// Crossing tick (first tick in the new lane); exclusive end.
    pub end: usize,
    pub class: Intention,
    /// Onset time (s); synthesized as `t_lane - 2.5` without indicator.
    pub t_indicator: f64,
    pub t_lane: f64,
    pub t_change: f64,
    pub indicator_used: bool,
    /// The matching indicator was already on before the 10 s lookback.
    pub lookback_capped: bool,
}

impl ManeuverLabel {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Labeling {
    /// Lane-change intervals in tick order.
    pub maneuvers: Vec<ManeuverLabel>,
    /// One class per tick.
    pub ticks: Vec<Intention>,
}

impl Labeling {
    pub fn count(&self, class: Intention) -> usize {
        self.maneuvers.iter().filter(|m| m.class == class).count()
    }
}

/// Crossing ticks with their direction.
pub fn crossings(lanes: &[u8]) -> Result<Vec<(usize, Side)>, LabelError> {
    let mut out = Vec::new();
    for k in 1..lanes.len() {
        let (from, to) = (lanes[k - 1], lanes[k]);
        match to as i32 - from as i32 {
            0 => {}
            -1 => out.push((k, Side::Left)),
            1 => out.push((k, Side::Right)),
            _ => return Err(LabelError::LaneJump { tick: k, from, to }),
        }
    }
    Ok(out)
}

/// Labels a log given per-tick lane indices and indicator codes.
pub fn label_ticks(lanes: &[u8], indicators: &[u8]) -> Result<Labeling, LabelError> {
    if lanes.len() != indicators.len() {
        return Err(LabelError::LengthMismatch);
    }
    let lookback = seconds_to_ticks(INDICATOR_LOOKBACK) as usize;
    let default_window = seconds_to_ticks(T_CHANGE_DEFAULT) as usize;
    let mut ticks = vec![Intention::Lk; lanes.len()];
    let mut maneuvers = Vec::new();
    let mut prev_crossing = 0usize;
    for (k, side) in crossings(lanes)? {
        let want = side.indicator().code();
        let floor = k.saturating_sub(lookback).max(prev_crossing);
        // latest tick in the window with the matching indicator
        let last_on = (floor..k).rev().find(|&j| indicators[j] == want);
        let (start, used, capped) = match last_on {
            Some(j) => {
                let mut s = j;
                while s > floor && indicators[s - 1] == want {
                    s -= 1;
                }
                let capped = s == floor && s > prev_crossing && s > 0 && indicators[s - 1] == want;
                (s, true, capped)
            }
            None => (k.saturating_sub(default_window).max(prev_crossing), false, false),
        };
        let t_lane = k as f64 * TICK_SECONDS;
        let (t_indicator, t_change) = if used {
            let t = start as f64 * TICK_SECONDS;
            (t, t_lane - t)
        } else {
            (t_lane - T_CHANGE_DEFAULT, T_CHANGE_DEFAULT)
        };
        let class = side.intention();
        ticks[start..k].fill(class);
        maneuvers.push(ManeuverLabel {
            start,
            end: k,
            class,
            t_indicator,
            t_lane,
            t_change,
            indicator_used: used,
            lookback_capped: capped,
        });
        prev_crossing = k;
    }
    Ok(Labeling { maneuvers, ticks })
}

/// Labels a feature log.
pub fn label_log(log: &[FeatureVector]) -> Result<Labeling, LabelError> {
    let lanes: Vec<u8> = log.iter().map(|f| f.lane).collect();
    let indicators: Vec<u8> = log.iter().map(|f| f.indicator).collect();
    label_ticks(&lanes, &indicators)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AngleOnset {
    pub tick: usize,
    /// The threshold was never crossed; `tick` is the 2.5 s fallback.
    pub fallback: bool,
}

/// Latest tick before `crossing` where the heading, signed toward `side`,
/// rises through `threshold_deg`.
pub fn angle_onset(headings: &[f64], crossing: usize, side: Side, threshold_deg: f64) -> AngleOnset {
    let thr = threshold_deg.to_radians();
    let crossing = crossing.min(headings.len());
    let signed = |j: usize| side.sign() * headings[j];
    for j in (1..crossing).rev() {
        if signed(j) >= thr && signed(j - 1) < thr {
            return AngleOnset {
                tick: j,
                fallback: false,
            };
        }
    }
    AngleOnset {
        tick: crossing.saturating_sub(seconds_to_ticks(T_CHANGE_DEFAULT) as usize),
        fallback: true,
    }
}
