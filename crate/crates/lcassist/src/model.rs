//! Model bundle files and training.
//!
//! A bundle is one pretty-printed JSON document:
//!
//! ```text
//! { "format": "lcassist-model", "version": 1, "driver_id": ..., "seed": ...,
//!   "smoothing_window": 10, "layout": {...}, "fuzzy": {...}, "forest": {...} }
//! ```
//!
//! `fuzzy` lists each continuous feature's trapezoids as ordered
//! `a1, a2, a3, a4, label` records; `forest` holds the trees as flat node
//! lists together with the hyperparameters used to grow them.

use std::fs;
use std::path::Path;

use lcassist_core::features::FeatureVector;
use lcassist_core::forest::{self, Dataset, ForestModel, ForestParams};
use lcassist_core::fuzzy::{build_mfs, FuzzyModel, FuzzyParams, MembershipLayout};
use lcassist_core::session::{Assistant, SMOOTHING_WINDOW};
use lcassist_core::warning::ThresholdTable;
use lcassist_core::Intention;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logs::write_staged;

pub const BUNDLE_FORMAT: &str = "lcassist-model";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelBundle {
    pub format: String,
    pub version: u32,
    pub driver_id: String,
    pub seed: u64,
    pub smoothing_window: usize,
    pub layout: MembershipLayout,
    pub fuzzy: FuzzyModel,
    pub forest: ForestModel,
}

impl ModelBundle {
    pub fn new(fuzzy: FuzzyModel, forest: ForestModel) -> Self {
        ModelBundle {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            driver_id: forest.driver_id.clone(),
            seed: forest.seed,
            smoothing_window: SMOOTHING_WINDOW,
            layout: fuzzy.layout(),
            fuzzy,
            forest,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("bundles always serialize");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str, origin: &Path) -> Result<Self> {
        let bundle: ModelBundle = serde_json::from_str(text).map_err(|e| Error::data(origin, e.to_string()))?;
        bundle.check().map_err(|m| Error::data(origin, m))?;
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_staged(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    fn check(&self) -> Result<(), String> {
        if self.format != BUNDLE_FORMAT {
            return Err(format!("not a model bundle (format `{}`)", self.format));
        }
        if self.version != BUNDLE_VERSION {
            return Err(format!("unsupported bundle version {}", self.version));
        }
        self.fuzzy.check_layout(&self.layout).map_err(|e| e.to_string())?;
        if self.fuzzy.width() != self.forest.width {
            return Err(format!(
                "layout has {} columns but the forest expects {}",
                self.fuzzy.width(),
                self.forest.width
            ));
        }
        if self.forest.trees.len() != self.forest.tree_count {
            return Err("tree count does not match the stored trees".into());
        }
        Ok(())
    }

    pub fn classify(&self, fv: &FeatureVector) -> Intention {
        self.forest
            .predict(&self.fuzzy.fuzzify(fv))
            .expect("bundle widths are checked on load")
            .class
    }

    pub fn assistant(&self, table: ThresholdTable) -> Result<Assistant> {
        Ok(Assistant::new(
            self.fuzzy.clone(),
            self.forest.clone(),
            table,
            self.smoothing_window,
        )?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub fuzzy: FuzzyParams,
    pub forest: ForestParams,
    pub driver_id: String,
    /// Share of the log, taken from its end, kept out of training.
    pub holdout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            fuzzy: FuzzyParams::default(),
            forest: ForestParams::default(),
            driver_id: "synthetic".into(),
            holdout: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evaluation {
    pub rows: usize,
    pub accuracy: f64,
    /// Indexed by class; absent when the class does not occur.
    pub recall: [Option<f64>; 3],
    /// `confusion[truth][predicted]`.
    pub confusion: [[usize; 3]; 3],
}

pub fn evaluate(bundle: &ModelBundle, features: &[FeatureVector], truth: &[Intention]) -> Evaluation {
    let predicted: Vec<Intention> = features.iter().map(|f| bundle.classify(f)).collect();
    let confusion = forest::confusion(truth, &predicted);
    let (accuracy, recall) = forest::accuracy_and_recall(&confusion);
    Evaluation {
        rows: features.len(),
        accuracy,
        recall,
        confusion,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingSummary {
    pub train_rows: usize,
    pub class_counts: [usize; 3],
    pub holdout: Option<Evaluation>,
}

/// Fits memberships and the forest on the head of a labeled log and scores
/// the tail. `origin` names the log in errors.
pub fn train(
    features: &[FeatureVector],
    labels: &[Intention],
    config: &TrainConfig,
    origin: &Path,
) -> Result<(ModelBundle, TrainingSummary)> {
    if features.len() != labels.len() {
        return Err(Error::data(origin, "one label per row required"));
    }
    if !(0.0..1.0).contains(&config.holdout) {
        return Err(Error::Usage(format!(
            "holdout must be in [0, 1), got {}",
            config.holdout
        )));
    }
    let n_test = (features.len() as f64 * config.holdout).round() as usize;
    let split = features.len() - n_test;
    let (train_x, test_x) = features.split_at(split);
    let (train_y, test_y) = labels.split_at(split);

    let mut class_counts = [0; 3];
    for c in train_y {
        class_counts[c.index()] += 1;
    }
    if class_counts.iter().filter(|&&c| c > 0).count() < 2 {
        return Err(Error::data(
            origin,
            "training rows hold a single class; collect more data with lane changes",
        ));
    }

    let fuzzy = build_mfs(train_x, &config.fuzzy).map_err(|e| Error::data(origin, e.to_string()))?;
    let mut data = Dataset::new(fuzzy.width());
    let mut mv = Vec::with_capacity(fuzzy.width());
    for (f, c) in train_x.iter().zip(train_y) {
        fuzzy.fuzzify_into(f, &mut mv);
        data.push(&mv, *c).map_err(|e| Error::data(origin, e.to_string()))?;
    }
    let model = forest::train(&data, &config.forest, &config.driver_id).map_err(|e| Error::Config(e.to_string()))?;
    let bundle = ModelBundle::new(fuzzy, model);
    let holdout = (n_test > 0).then(|| evaluate(&bundle, test_x, test_y));
    Ok((
        bundle,
        TrainingSummary {
            train_rows: split,
            class_counts,
            holdout,
        },
    ))
}
