//! TTC violation ratios per maneuver, near-miss ratios, threshold sweeps and
//! Welch's t-test.
//!
//! A maneuver is a maximal run of ticks carrying the same class, or, for a
//! series built from a [`Labeling`], one labeled lane-change interval (two
//! back-to-back left changes are two maneuvers). A maneuver counts as exceeding a threshold in a direction when that
//! direction's TTC is below the threshold on at least one of its ticks, so
//! every ratio lies in `[0, 1]`.

use alloc::vec::Vec;
use core::fmt;
use core::ops::Range;

use crate::labeling::{Labeling, ManeuverLabel};
use crate::types::{Direction, Intention};
use crate::warning::ThresholdTable;

/// TTC below which an instant counts as a near miss (s).
pub const NEAR_MISS_TTC: f64 = 1.0;
/// Sweep step (s).
pub const SWEEP_STEP: f64 = 0.5;
pub const SIGNIFICANCE: f64 = 0.05;

/// Per-tick class and six TTCs (indexed by [`Direction::index`]).
#[derive(Debug, Clone, Copy)]
pub struct RunSeries<'a> {
    pub classes: &'a [Intention],
    pub ttcs: &'a [[f64; 6]],
    /// Lane-change intervals; when present they define the LCL and LCR
    /// maneuvers instead of runs of `classes`.
    pub labels: Option<&'a [ManeuverLabel]>,
}

impl<'a> RunSeries<'a> {
    pub fn new(classes: &'a [Intention], ttcs: &'a [[f64; 6]]) -> Self {
        assert_eq!(classes.len(), ttcs.len(), "class and TTC columns differ in length");
        RunSeries {
            classes,
            ttcs,
            labels: None,
        }
    }

    pub fn labeled(labeling: &'a Labeling, ttcs: &'a [[f64; 6]]) -> Self {
        RunSeries {
            labels: Some(&labeling.maneuvers),
            ..RunSeries::new(&labeling.ticks, ttcs)
        }
    }

    /// Maneuvers of `class`.
    pub fn maneuvers(&self, class: Intention) -> Vec<Range<usize>> {
        match (class, self.labels) {
            (Intention::Lk, _) | (_, None) => maneuvers(self.classes, class),
            (c, Some(labels)) => labels.iter().filter(|m| m.class == c).map(|m| m.start..m.end).collect(),
        }
    }
}

/// Maximal runs of `class`.
pub fn maneuvers(classes: &[Intention], class: Intention) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, &c) in classes.iter().enumerate() {
        match (c == class, start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(s..i);
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(s..classes.len());
    }
    out
}

/// `(exceeded, maneuvers)` for one class, direction and threshold.
pub fn violation_counts(run: RunSeries<'_>, class: Intention, dir: Direction, threshold: f64) -> (usize, usize) {
    let ms = run.maneuvers(class);
    let exceeded = ms
        .iter()
        .filter(|r| run.ttcs[(*r).clone()].iter().any(|t| t[dir.index()] < threshold))
        .count();
    (exceeded, ms.len())
}

/// Share of `class` maneuvers with `TTC < threshold` in `dir`; `None` when
/// the run has no such maneuver.
pub fn violation_ratio(run: RunSeries<'_>, class: Intention, dir: Direction, threshold: f64) -> Option<f64> {
    let (e, n) = violation_counts(run, class, dir, threshold);
    (n > 0).then(|| e as f64 / n as f64)
}

/// Share of `class` maneuvers in which any direction monitored for that
/// class had `TTC < 1 s`.
pub fn near_miss_ratio(run: RunSeries<'_>, class: Intention, table: &ThresholdTable) -> Option<f64> {
    let dirs = table.monitored(class);
    let ms = run.maneuvers(class);
    if ms.is_empty() {
        return None;
    }
    let hit = ms
        .iter()
        .filter(|r| {
            run.ttcs[(*r).clone()]
                .iter()
                .any(|t| dirs.iter().any(|d| t[d.index()] < NEAR_MISS_TTC))
        })
        .count();
    Some(hit as f64 / ms.len() as f64)
}

/// Thresholds `start, start - 0.5, ...` down to 1.0 (inclusive when on the
/// grid).
pub fn sweep_thresholds(start: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut k = 0u32;
    loop {
        let t = start - SWEEP_STEP * k as f64;
        if t < NEAR_MISS_TTC - 1e-9 {
            break;
        }
        out.push(t);
        k += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SweepPoint {
    pub threshold: f64,
    pub exceeded: usize,
    pub maneuvers: usize,
    pub ratio: Option<f64>,
}

pub fn sweep(run: RunSeries<'_>, class: Intention, dir: Direction, start: f64) -> Vec<SweepPoint> {
    sweep_thresholds(start)
        .into_iter()
        .map(|threshold| {
            let (exceeded, maneuvers) = violation_counts(run, class, dir, threshold);
            SweepPoint {
                threshold,
                exceeded,
                maneuvers,
                ratio: (maneuvers > 0).then(|| exceeded as f64 / maneuvers as f64),
            }
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DirectionStats {
    pub class: Intention,
    pub direction: Direction,
    /// Warning threshold of this class and direction.
    pub threshold: f64,
    pub exceeded: usize,
    pub maneuvers: usize,
    pub violation_ratio: Option<f64>,
    pub sweep: Vec<SweepPoint>,
}

/// Measures of one run.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct RunMetrics {
    pub maneuver_counts: [usize; 3],
    pub directions: Vec<DirectionStats>,
    pub near_miss: [Option<f64>; 3],
    /// Sum of the class's per-direction violation ratios.
    pub violation_sum: [Option<f64>; 3],
}

impl RunMetrics {
    pub fn direction(&self, class: Intention, dir: Direction) -> Option<&DirectionStats> {
        self.directions.iter().find(|d| d.class == class && d.direction == dir)
    }
}

/// Every class and monitored direction of `table`, with sweeps from the
/// warning threshold.
pub fn run_metrics(run: RunSeries<'_>, table: &ThresholdTable) -> RunMetrics {
    let mut directions = Vec::new();
    let mut maneuver_counts = [0; 3];
    let mut near_miss = [None; 3];
    let mut violation_sum = [None; 3];
    for class in Intention::ALL {
        maneuver_counts[class.index()] = run.maneuvers(class).len();
        near_miss[class.index()] = near_miss_ratio(run, class, table);
        for dir in table.monitored(class).iter() {
            let threshold = table.warning_threshold(class, dir).unwrap();
            let (exceeded, n) = violation_counts(run, class, dir, threshold);
            let ratio = (n > 0).then(|| exceeded as f64 / n as f64);
            if let Some(r) = ratio {
                *violation_sum[class.index()].get_or_insert(0.0) += r;
            }
            directions.push(DirectionStats {
                class,
                direction: dir,
                threshold,
                exceeded,
                maneuvers: n,
                violation_ratio: ratio,
                sweep: sweep(run, class, dir, threshold),
            });
        }
    }
    RunMetrics {
        maneuver_counts,
        directions,
        near_miss,
        violation_sum,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StatsError {
    /// Each sample needs at least two finite values.
    TooFewSamples,
    NonFinite,
}

impl fmt::Display for StatsError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StatsError::TooFewSamples => f.write_str("each sample needs at least two values"),
            StatsError::NonFinite => f.write_str("samples must be finite"),
        }
    }
}

impl core::error::Error for StatsError {}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TTest {
    pub t: f64,
    pub df: f64,
    /// Two-sided.
    pub p: f64,
    pub significant: bool,
    /// Both samples had zero variance.
    pub degenerate: bool,
    pub mean_a: f64,
    pub mean_b: f64,
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Two-sample unequal-variance t-test.
pub fn welch_ttest(a: &[f64], b: &[f64]) -> Result<TTest, StatsError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(StatsError::TooFewSamples);
    }
    if a.iter().chain(b).any(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (sa, sb) = (va / a.len() as f64, vb / b.len() as f64);
    let se2 = sa + sb;
    if se2 == 0.0 {
        let (t, p) = if ma == mb {
            (0.0, 1.0)
        } else if ma > mb {
            (f64::INFINITY, 0.0)
        } else {
            (f64::NEG_INFINITY, 0.0)
        };
        return Ok(TTest {
            t,
            df: (a.len() + b.len() - 2) as f64,
            p,
            significant: p < SIGNIFICANCE,
            degenerate: true,
            mean_a: ma,
            mean_b: mb,
        });
    }
    let t = (ma - mb) / libm::sqrt(se2);
    let df = se2 * se2 / (sa * sa / (a.len() as f64 - 1.0) + sb * sb / (b.len() as f64 - 1.0));
    let p = student_t_two_sided(t, df);
    Ok(TTest {
        t,
        df,
        p,
        significant: p < SIGNIFICANCE,
        degenerate: false,
        mean_a: ma,
        mean_b: mb,
    })
}

/// `P(|T| >= |t|)` for Student's t with `df` degrees of freedom.
pub fn student_t_two_sided(t: f64, df: f64) -> f64 {
    if t.is_infinite() {
        return 0.0;
    }
    let x = df / (df + t * t);
    regularized_beta(x, 0.5 * df, 0.5).clamp(0.0, 1.0)
}

/// Regularized incomplete beta `I_x(a, b)`.
pub fn regularized_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = libm::lgamma(a + b) - libm::lgamma(a) - libm::lgamma(b) + a * libm::log(x) + b * libm::log1p(-x);
    let front = libm::exp(ln_front);
    if x < (a + 1.0) / (a + b + 2.0) {
        front * beta_cf(x, a, b) / a
    } else {
        1.0 - front * beta_cf(1.0 - x, b, a) / b
    }
}

/// Continued fraction for the incomplete beta (modified Lentz).
fn beta_cf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let (qab, qap, qam) = (a + b, a + 1.0, a - 1.0);
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
