//! Trapezoidal membership functions generated from data with FN-DBSCAN.
//!
//! [`build_mfs`] clusters each of the 21 continuous features independently
//! and turns every cluster into one trapezoid: the core is the cluster's
//! interquartile range and the ramps reach to the midpoint between
//! neighboring cores. [`FuzzyModel::fuzzify`] then maps a feature vector to
//! the membership vector consumed by the forest.
//!
//! Membership vector layout: for each continuous feature in
//! [`FEATURE_NAMES`] order, one degree per MF in ascending core order; then
//! the raw `Ln`, `I` and `G` values.

mod dbscan;
mod mf;

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

pub use dbscan::{fn_dbscan, Clustering, NeighborhoodKernel};
pub use mf::TrapezoidalMf;

use crate::features::{continuous_range, FeatureVector, CONTINUOUS_COUNT, FEATURE_NAMES};

/// Share of the gap between two cores by which adjacent supports overlap
/// past the midpoint, and of the outer ramp by which the outermost support
/// extends past the range bound.
const SUPPORT_OVERLAP: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub enum FuzzyError {
    EmptySamples,
    InvalidParameter(&'static str),
    FeatureCount { expected: usize, got: usize },
    LayoutMismatch,
}

impl fmt::Display for FuzzyError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FuzzyError::EmptySamples => f.write_str("no samples"),
            FuzzyError::InvalidParameter(msg) => f.write_str(msg),
            FuzzyError::FeatureCount { expected, got } => {
                write!(f, "expected {expected} feature columns, got {got}")
            }
            FuzzyError::LayoutMismatch => f.write_str("membership layout does not match model"),
        }
    }
}

impl core::error::Error for FuzzyError {}

/// What `eps_fraction` is a fraction of.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum EpsBasis {
    /// The feature's full value range.
    Range,
    /// The observed sample span (max - min); falls back to the range when
    /// every sample is equal.
    #[default]
    Span,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FuzzyParams {
    pub eps_fraction: f64,
    pub eps_basis: EpsBasis,
    /// min_density as a fraction of the sample count.
    pub min_density_fraction: f64,
    pub kernel: NeighborhoodKernel,
}

impl Default for FuzzyParams {
    fn default() -> Self {
        FuzzyParams {
            eps_fraction: 0.1,
            eps_basis: EpsBasis::Span,
            min_density_fraction: 0.01,
            kernel: NeighborhoodKernel::Linear,
        }
    }
}

/// Membership functions of one continuous feature.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FeatureMfs {
    pub name: String,
    pub range: (f64, f64),
    pub eps: f64,
    pub min_density: f64,
    /// Set when clustering found only noise and the whole sample was used as
    /// one cluster.
    #[cfg_attr(feature = "serde", serde(default))]
    pub noise_fallback: bool,
    pub mfs: Vec<TrapezoidalMf>,
}

impl FeatureMfs {
    pub fn degrees(&self, x: f64) -> impl Iterator<Item = f64> + '_ {
        let x = x.clamp(self.range.0, self.range.1);
        self.mfs.iter().map(move |mf| mf.membership(x))
    }

    pub fn max_membership(&self, x: f64) -> f64 {
        self.degrees(x).fold(0.0, f64::max)
    }
}

/// Column names of the membership vector, fixed at training time.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MembershipLayout {
    pub columns: Vec<String>,
}

impl MembershipLayout {
    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FuzzyModel {
    pub params: FuzzyParams,
    pub features: Vec<FeatureMfs>,
}

impl FuzzyModel {
    pub fn layout(&self) -> MembershipLayout {
        let mut columns = Vec::new();
        for f in &self.features {
            for mf in &f.mfs {
                columns.push(format!("{}:{}", f.name, mf.label));
            }
        }
        for name in &FEATURE_NAMES[CONTINUOUS_COUNT..] {
            columns.push(String::from(*name));
        }
        MembershipLayout { columns }
    }

    /// Length of the membership vector.
    pub fn width(&self) -> usize {
        self.features.iter().map(|f| f.mfs.len()).sum::<usize>() + 3
    }

    pub fn fuzzify(&self, fv: &FeatureVector) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.width());
        self.fuzzify_into(fv, &mut out);
        out
    }

    /// Clears `out` and writes the membership vector into it.
    pub fn fuzzify_into(&self, fv: &FeatureVector, out: &mut Vec<f64>) {
        out.clear();
        let xs = fv.continuous();
        for (f, &x) in self.features.iter().zip(xs.iter()) {
            out.extend(f.degrees(x));
        }
        out.push(fv.lane as f64);
        out.push(fv.indicator as f64);
        out.push(fv.gear as f64);
    }

    /// Checks a stored layout against the one this model produces.
    pub fn check_layout(&self, layout: &MembershipLayout) -> Result<(), FuzzyError> {
        if self.layout() == *layout {
            Ok(())
        } else {
            Err(FuzzyError::LayoutMismatch)
        }
    }
}

/// Type-7 (linear interpolation) percentile of sorted values.
pub fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p;
    let lo = libm::floor(h) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Clusters one feature and builds its trapezoids.
pub fn build_feature_mfs(
    name: &str,
    samples: &[f64],
    range: (f64, f64),
    params: &FuzzyParams,
) -> Result<FeatureMfs, FuzzyError> {
    if samples.is_empty() {
        return Err(FuzzyError::EmptySamples);
    }
    let (lo, hi) = range;
    if !(lo < hi) {
        return Err(FuzzyError::InvalidParameter("empty feature range"));
    }
    if !(params.eps_fraction > 0.0) || !(params.min_density_fraction > 0.0) {
        return Err(FuzzyError::InvalidParameter("fractions must be positive"));
    }
    let clipped: Vec<f64> = samples
        .iter()
        .map(|&x| if x.is_nan() { lo } else { x.clamp(lo, hi) })
        .collect();
    let (min, max) = clipped
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
    let basis = match params.eps_basis {
        EpsBasis::Span if max > min => max - min,
        _ => hi - lo,
    };
    let eps = params.eps_fraction * basis;
    let min_density = params.min_density_fraction * clipped.len() as f64;

    let mut out = FeatureMfs {
        name: String::from(name),
        range,
        eps,
        min_density,
        noise_fallback: false,
        mfs: Vec::new(),
    };

    if max == min {
        out.mfs.push(TrapezoidalMf::new(
            if min == lo {
                lo
            } else {
                lo - SUPPORT_OVERLAP * (min - lo)
            },
            min,
            min,
            if min == hi {
                hi
            } else {
                hi + SUPPORT_OVERLAP * (hi - min)
            },
            format!("{name}0"),
        ));
        return Ok(out);
    }

    let clustering = fn_dbscan(&clipped, eps, min_density, params.kernel)?;
    let mut cores: Vec<(f64, f64)> = clustering
        .clusters
        .iter()
        .map(|members| {
            // members come sorted by value
            let vals: Vec<f64> = members.iter().map(|&i| clipped[i]).collect();
            (percentile_sorted(&vals, 0.25), percentile_sorted(&vals, 0.75))
        })
        .collect();
    if cores.is_empty() {
        let mut vals = clipped.clone();
        vals.sort_by(f64::total_cmp);
        cores.push((percentile_sorted(&vals, 0.25), percentile_sorted(&vals, 0.75)));
        out.noise_fallback = true;
    }
    cores.sort_by(|a, b| (a.0 + a.1).total_cmp(&(b.0 + b.1)));

    let k = cores.len();
    for (i, &(a2, a3)) in cores.iter().enumerate() {
        let a1 = if i == 0 {
            if a2 == lo {
                lo
            } else {
                lo - SUPPORT_OVERLAP * (a2 - lo)
            }
        } else {
            let prev = cores[i - 1].1;
            let gap = (a2 - prev).max(0.0);
            (0.5 * (prev + a2) - SUPPORT_OVERLAP * gap).min(a2)
        };
        let a4 = if i + 1 == k {
            if a3 == hi {
                hi
            } else {
                hi + SUPPORT_OVERLAP * (hi - a3)
            }
        } else {
            let next = cores[i + 1].0;
            let gap = (next - a3).max(0.0);
            (0.5 * (a3 + next) + SUPPORT_OVERLAP * gap).max(a3)
        };
        out.mfs.push(TrapezoidalMf::new(a1, a2, a3, a4, format!("{name}{i}")));
    }
    Ok(out)
}

/// Builds membership functions for every continuous feature from training
/// vectors.
pub fn build_mfs(samples: &[FeatureVector], params: &FuzzyParams) -> Result<FuzzyModel, FuzzyError> {
    if samples.is_empty() {
        return Err(FuzzyError::EmptySamples);
    }
    let columns: Vec<[f64; CONTINUOUS_COUNT]> = samples.iter().map(|fv| fv.continuous()).collect();
    let mut features = Vec::with_capacity(CONTINUOUS_COUNT);
    let mut column = Vec::with_capacity(samples.len());
    for j in 0..CONTINUOUS_COUNT {
        column.clear();
        column.extend(columns.iter().map(|row| row[j]));
        features.push(build_feature_mfs(
            FEATURE_NAMES[j],
            &column,
            continuous_range(j),
            params,
        )?);
    }
    Ok(FuzzyModel {
        params: *params,
        features,
    })
}
