#![allow(dead_code)]

use lcassist_core::features::{continuous_range, FeatureVector, CONTINUOUS_COUNT, FEATURE_COUNT};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Uniform over every feature's range.
pub fn random_vector(rng: &mut impl Rng) -> FeatureVector {
    let mut v = [0.0; FEATURE_COUNT];
    for (i, x) in v.iter_mut().enumerate().take(CONTINUOUS_COUNT) {
        let (lo, hi) = continuous_range(i);
        *x = rng.random_range(lo..=hi);
    }
    v[21] = rng.random_range(1..=3) as f64;
    v[22] = rng.random_range(0..=2) as f64;
    v[23] = rng.random_range(1..=5) as f64;
    FeatureVector::from_array(&v)
}

pub fn random_vectors(seed: u64, n: usize) -> Vec<FeatureVector> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| random_vector(&mut rng)).collect()
}
