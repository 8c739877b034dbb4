//! One-dimensional FN-DBSCAN.
//!
//! A point's fuzzy neighborhood cardinality is the sum of kernel memberships
//! of every sample within `eps` of it (itself included). Points whose
//! cardinality reaches `min_density` are core points; clusters are the
//! density-connected groups of core points, plus the non-core points within
//! `eps` of a core point. Everything else is noise.
//!
//! In one dimension the samples can be sorted once, after which
//! cardinalities come from prefix sums and clusters are runs of core points
//! whose consecutive gaps stay within `eps`.

use alloc::vec;
use alloc::vec::Vec;

use super::FuzzyError;

/// Neighborhood membership as a function of distance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum NeighborhoodKernel {
    /// `max(0, 1 - dist / eps)`
    #[default]
    Linear,
}

impl NeighborhoodKernel {
    pub fn membership(self, dist: f64, eps: f64) -> f64 {
        match self {
            NeighborhoodKernel::Linear => (1.0 - dist.abs() / eps).max(0.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Sample indices per cluster, each sorted by value; clusters ordered by
    /// value.
    pub clusters: Vec<Vec<usize>>,
    pub noise: Vec<usize>,
    /// Core flag per input sample.
    pub core: Vec<bool>,
    /// Fuzzy neighborhood cardinality per input sample.
    pub cardinality: Vec<f64>,
}

impl Clustering {
    /// Cluster id per input sample, `None` for noise.
    pub fn labels(&self) -> Vec<Option<usize>> {
        let mut labels = vec![None; self.core.len()];
        for (c, members) in self.clusters.iter().enumerate() {
            for &i in members {
                labels[i] = Some(c);
            }
        }
        labels
    }
}

/// Clusters scalar samples with FN-DBSCAN.
pub fn fn_dbscan(
    samples: &[f64],
    eps: f64,
    min_density: f64,
    kernel: NeighborhoodKernel,
) -> Result<Clustering, FuzzyError> {
    if samples.is_empty() {
        return Err(FuzzyError::EmptySamples);
    }
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(FuzzyError::InvalidParameter("eps must be positive"));
    }
    if !(min_density > 0.0) {
        return Err(FuzzyError::InvalidParameter("min_density must be positive"));
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(FuzzyError::InvalidParameter("samples must be finite"));
    }

    let n = samples.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| samples[a].total_cmp(&samples[b]).then(a.cmp(&b)));
    let xs: Vec<f64> = order.iter().map(|&i| samples[i]).collect();

    // prefix[k] = sum of xs[..k]
    let mut prefix = Vec::with_capacity(n + 1);
    prefix.push(0.0);
    for &x in &xs {
        prefix.push(prefix.last().unwrap() + x);
    }

    let mut card_sorted = vec![0.0; n];
    let (mut lo, mut hi) = (0usize, 0usize);
    for (k, &x) in xs.iter().enumerate() {
        while xs[lo] < x - eps {
            lo += 1;
        }
        if hi < k {
            hi = k;
        }
        while hi + 1 < n && xs[hi + 1] <= x + eps {
            hi += 1;
        }
        card_sorted[k] = match kernel {
            NeighborhoodKernel::Linear => {
                let left = (k + 1 - lo) as f64;
                let left_dist = left * x - (prefix[k + 1] - prefix[lo]);
                let right = (hi - k) as f64;
                let right_dist = (prefix[hi + 1] - prefix[k + 1]) - right * x;
                left + right - (left_dist + right_dist) / eps
            }
        };
    }
    let is_core: Vec<bool> = card_sorted.iter().map(|&c| c >= min_density).collect();

    let mut cluster_of = vec![usize::MAX; n];
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    let mut last_core: Option<usize> = None;
    for k in 0..n {
        if !is_core[k] {
            continue;
        }
        match last_core {
            Some(p) if xs[k] - xs[p] <= eps => cluster_of[k] = cluster_of[p],
            _ => {
                cluster_of[k] = clusters.len();
                clusters.push(Vec::new());
            }
        }
        last_core = Some(k);
    }

    // border points join the cluster of their nearest core (lower on ties)
    let mut prev_core: Vec<Option<usize>> = vec![None; n];
    let mut p = None;
    for k in 0..n {
        if is_core[k] {
            p = Some(k);
        }
        prev_core[k] = p;
    }
    let mut next = None;
    for k in (0..n).rev() {
        if is_core[k] {
            next = Some(k);
            continue;
        }
        let d_prev = prev_core[k].map(|c| (xs[k] - xs[c], c));
        let d_next = next.map(|c: usize| (xs[c] - xs[k], c));
        let nearest = match (d_prev, d_next) {
            (Some(a), Some(b)) => Some(if b.0 < a.0 { b } else { a }),
            (a, b) => a.or(b),
        };
        if let Some((d, c)) = nearest {
            if d <= eps {
                cluster_of[k] = cluster_of[c];
            }
        }
    }

    let mut noise = Vec::new();
    for k in 0..n {
        match cluster_of[k] {
            usize::MAX => noise.push(order[k]),
            c => clusters[c].push(order[k]),
        }
    }
    let mut core = vec![false; n];
    let mut cardinality = vec![0.0; n];
    for k in 0..n {
        core[order[k]] = is_core[k];
        cardinality[order[k]] = card_sorted[k];
    }
    noise.sort_unstable();
    Ok(Clustering {
        clusters,
        noise,
        core,
        cardinality,
    })
}
