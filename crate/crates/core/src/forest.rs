//! Bagged Gini decision trees over membership vectors.
//!
//! Trees are stored as flat node lists with the root at index 0. Each tree
//! draws its bootstrap and feature subsets from its own RNG seeded from
//! `(seed, tree index)`, so trees can be trained in any order (or in
//! parallel) and still reproduce the same model.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::types::Intention;

#[derive(Debug, Clone, PartialEq)]
pub enum ForestError {
    EmptyDataset,
    /// Row length differs from the dataset or model width.
    WidthMismatch {
        expected: usize,
        got: usize,
    },
    InvalidParams(&'static str),
}

impl fmt::Display for ForestError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForestError::EmptyDataset => f.write_str("empty training set"),
            ForestError::WidthMismatch { expected, got } => {
                write!(f, "membership vector has {got} entries, model expects {expected}")
            }
            ForestError::InvalidParams(msg) => f.write_str(msg),
        }
    }
}

impl core::error::Error for ForestError {}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ForestParams {
    pub tree_count: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    /// Features tried per split; `None` means `ceil(sqrt(width))`.
    pub feature_subsample: Option<usize>,
    pub seed: u64,
    /// Draw bootstrap rows with probability inversely proportional to their
    /// class frequency.
    pub class_balanced: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams {
            tree_count: 100,
            max_depth: 12,
            min_leaf: 5,
            feature_subsample: None,
            seed: 0,
            class_balanced: false,
        }
    }
}

impl ForestParams {
    pub fn validate(&self) -> Result<(), ForestError> {
        if self.tree_count == 0 {
            return Err(ForestError::InvalidParams("tree_count must be at least 1"));
        }
        if self.min_leaf == 0 {
            return Err(ForestError::InvalidParams("min_leaf must be at least 1"));
        }
        if self.feature_subsample == Some(0) {
            return Err(ForestError::InvalidParams("feature_subsample must be at least 1"));
        }
        Ok(())
    }

    pub fn features_per_split(&self, width: usize) -> usize {
        self.feature_subsample
            .unwrap_or_else(|| libm::ceil(libm::sqrt(width as f64)) as usize)
            .clamp(1, width.max(1))
    }
}

/// Row-major training matrix with one label per row.
#[derive(Debug, Clone, Default)]
pub struct Dataset {
    width: usize,
    values: Vec<f64>,
    labels: Vec<Intention>,
}

impl Dataset {
    pub fn new(width: usize) -> Self {
        Dataset {
            width,
            values: Vec::new(),
            labels: Vec::new(),
        }
    }

    pub fn push(&mut self, row: &[f64], label: Intention) -> Result<(), ForestError> {
        if row.len() != self.width {
            return Err(ForestError::WidthMismatch {
                expected: self.width,
                got: row.len(),
            });
        }
        self.values.extend_from_slice(row);
        self.labels.push(label);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.width..(i + 1) * self.width]
    }

    pub fn label(&self, i: usize) -> Intention {
        self.labels[i]
    }

    pub fn class_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for l in &self.labels {
            c[l.index()] += 1;
        }
        c
    }

    #[inline]
    fn value(&self, i: usize, feature: usize) -> f64 {
        self.values[i * self.width + feature]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "node", rename_all = "lowercase"))]
pub enum Node {
    /// Rows with `value <= threshold` go left.
    Split {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        class: Intention,
    },
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DecisionTree {
    pub nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn predict(&self, x: &[f64]) -> Intention {
        let mut at = 0usize;
        loop {
            match self.nodes[at] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    at = if x[feature as usize] <= threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], at: usize) -> usize {
            match nodes[at] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left as usize).max(walk(nodes, right as usize)),
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Forest output for one vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Prediction {
    pub class: Intention,
    /// Tree votes indexed by [`Intention::index`].
    pub votes: [u32; 3],
}

/// Plurality class; ties go to the lower index (LK, then LCL, then LCR).
pub fn plurality(votes: &[u32; 3]) -> Intention {
    let mut best = 0;
    for c in 1..3 {
        if votes[c] > votes[best] {
            best = c;
        }
    }
    Intention::from_index(best).unwrap()
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ForestModel {
    pub trees: Vec<DecisionTree>,
    pub tree_count: usize,
    /// Membership vector length the trees were trained on.
    pub width: usize,
    pub seed: u64,
    pub driver_id: String,
    pub params: ForestParams,
    /// Training rows per class.
    pub class_counts: [usize; 3],
}

impl ForestModel {
    pub fn predict(&self, mv: &[f64]) -> Result<Prediction, ForestError> {
        if mv.len() != self.width {
            return Err(ForestError::WidthMismatch {
                expected: self.width,
                got: mv.len(),
            });
        }
        let mut votes = [0u32; 3];
        for t in &self.trees {
            votes[t.predict(mv).index()] += 1;
        }
        Ok(Prediction {
            class: plurality(&votes),
            votes,
        })
    }

    /// True when the training data held a single class.
    pub fn is_single_class(&self) -> bool {
        self.class_counts.iter().filter(|&&c| c > 0).count() <= 1
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// RNG seed of tree `index` in a forest seeded with `seed`.
pub fn tree_seed(seed: u64, index: usize) -> u64 {
    splitmix64(seed ^ splitmix64(index as u64))
}

/// Bootstrap row indices for one tree: `data.len()` draws with replacement.
pub fn bootstrap(data: &Dataset, class_balanced: bool, rng: &mut impl Rng) -> Vec<usize> {
    let n = data.len();
    if !class_balanced {
        return (0..n).map(|_| rng.random_range(0..n)).collect();
    }
    let counts = data.class_counts();
    let mut by_class: [Vec<usize>; 3] = Default::default();
    for i in 0..n {
        by_class[data.label(i).index()].push(i);
    }
    let present: Vec<usize> = (0..3).filter(|&c| counts[c] > 0).collect();
    (0..n)
        .map(|_| {
            let c = present[rng.random_range(0..present.len())];
            let rows = &by_class[c];
            rows[rng.random_range(0..rows.len())]
        })
        .collect()
}

fn gini(counts: &[usize; 3], total: usize) -> f64 {
    if total == 0 {
        return 0.0;
    }
    let t = total as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / t) * (c as f64 / t)).sum::<f64>()
}

struct Builder<'a> {
    data: &'a Dataset,
    params: &'a ForestParams,
    per_split: usize,
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    features: Vec<usize>,
    scratch: Vec<(f64, usize)>,
}

impl Builder<'_> {
    fn counts(&self, rows: &[usize]) -> [usize; 3] {
        let mut c = [0; 3];
        for &i in rows {
            c[self.data.label(i).index()] += 1;
        }
        c
    }

    fn leaf(&mut self, counts: &[usize; 3]) -> u32 {
        let votes = counts.map(|c| c as u32);
        self.nodes.push(Node::Leaf {
            class: plurality(&votes),
        });
        (self.nodes.len() - 1) as u32
    }

    /// Best (feature, threshold, weighted child impurity) among a random
    /// feature subset.
    fn best_split(&mut self, rows: &[usize], counts: &[usize; 3]) -> Option<(usize, f64, f64)> {
        let n = rows.len();
        let min_leaf = self.params.min_leaf;
        let width = self.data.width();
        // partial Fisher-Yates over the persistent feature permutation
        for k in 0..self.per_split {
            let j = self.rng.random_range(k..width);
            self.features.swap(k, j);
        }
        let mut best: Option<(usize, f64, f64)> = None;
        for k in 0..self.per_split {
            let f = self.features[k];
            self.scratch.clear();
            self.scratch.extend(rows.iter().map(|&i| (self.data.value(i, f), i)));
            self.scratch
                .sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if self.scratch[0].0 == self.scratch[n - 1].0 {
                continue;
            }
            let mut left = [0usize; 3];
            for pos in 0..n - 1 {
                let (x, i) = self.scratch[pos];
                left[self.data.label(i).index()] += 1;
                let next = self.scratch[pos + 1].0;
                let n_left = pos + 1;
                if x == next || n_left < min_leaf || n - n_left < min_leaf {
                    continue;
                }
                let right = [counts[0] - left[0], counts[1] - left[1], counts[2] - left[2]];
                let score =
                    (n_left as f64 * gini(&left, n_left) + (n - n_left) as f64 * gini(&right, n - n_left)) / n as f64;
                if best.is_none_or(|b| score < b.2) {
                    let mut threshold = 0.5 * (x + next);
                    if threshold >= next {
                        threshold = x;
                    }
                    best = Some((f, threshold, score));
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize) -> u32 {
        let counts = self.counts(rows);
        let n = rows.len();
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth || n < 2 * self.params.min_leaf {
            return self.leaf(&counts);
        }
        let parent = gini(&counts, n);
        let Some((feature, threshold, score)) = self.best_split(rows, &counts) else {
            return self.leaf(&counts);
        };
        if score >= parent {
            return self.leaf(&counts);
        }
        // stable partition keeps row order reproducible
        let (mut l, mut r): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&i| self.data.value(i, feature) <= threshold);
        let at = self.nodes.len();
        self.nodes.push(Node::Leaf { class: Intention::Lk });
        let left = self.grow(&mut l, depth + 1);
        let right = self.grow(&mut r, depth + 1);
        self.nodes[at] = Node::Split {
            feature: feature as u32,
            threshold,
            left,
            right,
        };
        at as u32
    }
}

/// Fits tree number `index` of a forest.
pub fn train_tree(data: &Dataset, params: &ForestParams, index: usize) -> DecisionTree {
    let mut rng = ChaCha8Rng::seed_from_u64(tree_seed(params.seed, index));
    let mut rows = bootstrap(data, params.class_balanced, &mut rng);
    let mut b = Builder {
        data,
        params,
        per_split: params.features_per_split(data.width()),
        rng,
        nodes: Vec::new(),
        features: (0..data.width()).collect(),
        scratch: Vec::with_capacity(rows.len()),
    };
    b.grow(&mut rows, 0);
    DecisionTree { nodes: b.nodes }
}

/// Assembles a model from trees trained with [`train_tree`].
pub fn assemble(trees: Vec<DecisionTree>, data: &Dataset, params: &ForestParams, driver_id: &str) -> ForestModel {
    ForestModel {
        tree_count: trees.len(),
        trees,
        width: data.width(),
        seed: params.seed,
        driver_id: String::from(driver_id),
        params: *params,
        class_counts: data.class_counts(),
    }
}

/// Trains a forest sequentially. A single-class dataset yields constant
/// trees; check [`ForestModel::is_single_class`].
pub fn train(data: &Dataset, params: &ForestParams, driver_id: &str) -> Result<ForestModel, ForestError> {
    params.validate()?;
    if data.is_empty() {
        return Err(ForestError::EmptyDataset);
    }
    if data.width() == 0 {
        return Err(ForestError::InvalidParams("dataset has no features"));
    }
    let trees = (0..params.tree_count).map(|i| train_tree(data, params, i)).collect();
    Ok(assemble(trees, data, params, driver_id))
}

/// Sliding-window plurality over raw predictions. A class wins only with a
/// strict plurality; otherwise the previous output is kept.
#[derive(Debug, Clone)]
pub struct Smoother {
    window: usize,
    history: alloc::collections::VecDeque<Intention>,
    counts: [usize; 3],
    current: Intention,
}

impl Smoother {
    /// `window` is clamped to at least 1. The initial class is LK.
    pub fn new(window: usize) -> Self {
        let window = window.max(1);
        Smoother {
            window,
            history: alloc::collections::VecDeque::with_capacity(window),
            counts: [0; 3],
            current: Intention::Lk,
        }
    }

    pub fn push(&mut self, raw: Intention) -> Intention {
        if self.history.len() == self.window {
            let old = self.history.pop_front().unwrap();
            self.counts[old.index()] -= 1;
        }
        self.history.push_back(raw);
        self.counts[raw.index()] += 1;
        let max = *self.counts.iter().max().unwrap();
        let leaders: Vec<usize> = (0..3).filter(|&c| self.counts[c] == max).collect();
        if leaders.len() == 1 {
            self.current = Intention::from_index(leaders[0]).unwrap();
        }
        self.current
    }

    pub fn current(&self) -> Intention {
        self.current
    }
}

pub fn smooth(stream: &[Intention], window: usize) -> Vec<Intention> {
    let mut s = Smoother::new(window);
    stream.iter().map(|&c| s.push(c)).collect()
}

/// Confusion matrix `[truth][predicted]`.
pub fn confusion(truth: &[Intention], predicted: &[Intention]) -> [[usize; 3]; 3] {
    let mut m = [[0; 3]; 3];
    for (t, p) in truth.iter().zip(predicted) {
        m[t.index()][p.index()] += 1;
    }
    m
}

/// Overall accuracy and per-class recall (`None` for absent classes).
pub fn accuracy_and_recall(m: &[[usize; 3]; 3]) -> (f64, [Option<f64>; 3]) {
    let total: usize = m.iter().flatten().sum();
    let correct: usize = (0..3).map(|c| m[c][c]).sum();
    let recall = core::array::from_fn(|c| {
        let n: usize = m[c].iter().sum();
        (n > 0).then(|| m[c][c] as f64 / n as f64)
    });
    let acc = if total == 0 { 0.0 } else { correct as f64 / total as f64 };
    (acc, recall)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;
    use Intention::*;

    fn toy(n: usize) -> Dataset {
        let mut d = Dataset::new(2);
        for i in 0..n {
            let x = i as f64 / n as f64;
            let y = ((i * 37) % n) as f64 / n as f64;
            let label = if x < 0.3 {
                Lk
            } else if x < 0.7 {
                Lcl
            } else {
                Lcr
            };
            d.push(&[x, y], label).unwrap();
        }
        d
    }

    #[test]
    fn separable_toy_is_fit_exactly() {
        let d = toy(100);
        let p = ForestParams {
            tree_count: 10,
            min_leaf: 1,
            seed: 3,
            ..ForestParams::default()
        };
        let m = train(&d, &p, "toy").unwrap();
        for i in 0..d.len() {
            assert_eq!(m.predict(d.row(i)).unwrap().class, d.label(i));
        }
        // a single full-data tree with both features separates it too
        let mut b = Builder {
            data: &d,
            params: &ForestParams {
                feature_subsample: Some(2),
                ..p
            },
            per_split: 2,
            rng: ChaCha8Rng::seed_from_u64(0),
            nodes: Vec::new(),
            features: vec![0, 1],
            scratch: Vec::new(),
        };
        let mut rows: Vec<usize> = (0..d.len()).collect();
        b.grow(&mut rows, 0);
        let tree = DecisionTree { nodes: b.nodes };
        assert!((0..d.len()).all(|i| tree.predict(d.row(i)) == d.label(i)));
        assert_eq!(tree.depth(), 2);
    }

    #[test]
    fn single_class_gives_constant_model() {
        let mut d = Dataset::new(3);
        for i in 0..20 {
            d.push(&[i as f64, 0.0, 1.0], Lcr).unwrap();
        }
        let m = train(
            &d,
            &ForestParams {
                tree_count: 5,
                ..Default::default()
            },
            "x",
        )
        .unwrap();
        assert!(m.is_single_class());
        assert_eq!(m.predict(&[100.0, 5.0, 5.0]).unwrap().class, Lcr);
    }

    #[test]
    fn training_is_deterministic() {
        let d = toy(200);
        let p = ForestParams {
            tree_count: 8,
            seed: 11,
            ..ForestParams::default()
        };
        assert_eq!(train(&d, &p, "a").unwrap(), train(&d, &p, "a").unwrap());
        let other = train(&d, &ForestParams { seed: 12, ..p }, "a").unwrap();
        assert_ne!(train(&d, &p, "a").unwrap().trees, other.trees);
    }

    #[test]
    fn votes_and_tie_break() {
        let leaf = |c| DecisionTree {
            nodes: vec![Node::Leaf { class: c }],
        };
        let mut m = ForestModel {
            trees: vec![leaf(Lcl), leaf(Lcl), leaf(Lk)],
            tree_count: 3,
            width: 1,
            seed: 0,
            driver_id: String::new(),
            params: ForestParams::default(),
            class_counts: [1, 1, 0],
        };
        let p = m.predict(&[0.0]).unwrap();
        assert_eq!(p.class, Lcl);
        assert_eq!(p.votes, [1, 2, 0]);
        m.trees = vec![leaf(Lcr), leaf(Lcl)];
        assert_eq!(m.predict(&[0.0]).unwrap().class, Lcl);
        m.trees = vec![leaf(Lcr), leaf(Lk)];
        assert_eq!(m.predict(&[0.0]).unwrap().class, Lk);
        assert_eq!(
            m.predict(&[0.0, 1.0]),
            Err(ForestError::WidthMismatch { expected: 1, got: 2 })
        );
    }

    #[test]
    fn bootstrap_is_reproducible_and_full_size() {
        let d = toy(50);
        let mut a = ChaCha8Rng::seed_from_u64(tree_seed(1, 4));
        let mut b = ChaCha8Rng::seed_from_u64(tree_seed(1, 4));
        let x = bootstrap(&d, false, &mut a);
        assert_eq!(x.len(), 50);
        assert_eq!(x, bootstrap(&d, false, &mut b));
        let bal = bootstrap(&d, true, &mut a);
        assert_eq!(bal.len(), 50);
    }

    #[test]
    fn smoothing_examples() {
        assert_eq!(smooth(&[Lcl; 12], 10), vec![Lcl; 12]);
        let mut glitch = vec![Lk; 20];
        glitch[9] = Lcr;
        assert_eq!(smooth(&glitch, 10), vec![Lk; 20]);
        let alt: Vec<Intention> = (0..20).map(|i| if i % 2 == 0 { Lk } else { Lcl }).collect();
        let out = smooth(&alt, 10);
        // every even-length prefix is a tie, so LK holds throughout
        assert!(out.iter().all(|&c| c == Lk));
        let mut s = Smoother::new(3);
        s.push(Lcl);
        assert_eq!(s.push(Lcr), Lcl);
        assert_eq!(s.push(Lcr), Lcr);
    }

    #[test]
    fn recall_from_confusion() {
        let m = confusion(&[Lk, Lk, Lcl, Lcl], &[Lk, Lcl, Lcl, Lcl]);
        let (acc, rec) = accuracy_and_recall(&m);
        assert_eq!(acc, 0.75);
        assert_eq!(rec, [Some(0.5), Some(1.0), None]);
    }

    proptest! {
        #[test]
        fn votes_sum_to_tree_count(
            rows in proptest::collection::vec((0.0f64..1.0, 0.0f64..1.0, 0usize..3), 10..60),
            probe in proptest::array::uniform2(-0.5f64..1.5),
            trees in 1usize..7,
        ) {
            let mut d = Dataset::new(2);
            for (x, y, c) in &rows {
                d.push(&[*x, *y], Intention::from_index(*c).unwrap()).unwrap();
            }
            let m = train(&d, &ForestParams { tree_count: trees, min_leaf: 2, ..Default::default() }, "p").unwrap();
            let p = m.predict(&probe).unwrap();
            prop_assert_eq!(p.votes.iter().sum::<u32>() as usize, trees);
            for t in &m.trees {
                prop_assert!(t.depth() <= m.params.max_depth);
            }
        }
    }
}
