mod common;

use std::fs;
use std::path::Path;

use lcassist::model::{train, ModelBundle, TrainConfig};
use lcassist::Error;
use lcassist_core::forest::ForestParams;
use lcassist_core::{FeatureVector, Intention};
use tempfile::tempdir;

/// Class is a function of the indicator alone.
fn separable(n: usize) -> (Vec<FeatureVector>, Vec<Intention>) {
    let features = common::random_vectors(11, n);
    let labels = features
        .iter()
        .map(|f| Intention::from_index(f.indicator as usize).unwrap())
        .collect();
    (features, labels)
}

fn small_config(seed: u64) -> TrainConfig {
    TrainConfig {
        forest: ForestParams {
            tree_count: 15,
            seed,
            ..ForestParams::default()
        },
        ..TrainConfig::default()
    }
}

#[test]
fn separable_log_scores_perfectly_on_the_holdout() {
    let (x, y) = separable(1500);
    let (_, summary) = train(&x, &y, &small_config(1), Path::new("toy")).unwrap();
    let eval = summary.holdout.unwrap();
    assert_eq!(summary.train_rows, 1200);
    assert_eq!(eval.rows, 300);
    assert_eq!(eval.accuracy, 1.0);
}

#[test]
fn bundle_round_trip_keeps_predictions() {
    let (x, y) = separable(1000);
    let (bundle, _) = train(&x, &y, &small_config(2), Path::new("toy")).unwrap();
    let dir = tempdir().unwrap();
    let path = dir.path().join("model.json");
    bundle.save(&path).unwrap();
    let back = ModelBundle::load(&path).unwrap();
    assert_eq!(back, bundle);
    for v in common::random_vectors(99, 1000) {
        let a = bundle.forest.predict(&bundle.fuzzy.fuzzify(&v)).unwrap();
        let b = back.forest.predict(&back.fuzzy.fuzzify(&v)).unwrap();
        assert_eq!(a, b);
    }
}

#[test]
fn same_log_and_seed_give_identical_bytes() {
    let (x, y) = separable(800);
    let (a, _) = train(&x, &y, &small_config(3), Path::new("toy")).unwrap();
    let (b, _) = train(&x, &y, &small_config(3), Path::new("toy")).unwrap();
    assert_eq!(a.to_json(), b.to_json());
    let (c, _) = train(&x, &y, &small_config(4), Path::new("toy")).unwrap();
    assert_ne!(a.to_json(), c.to_json());
}

#[test]
fn single_class_log_asks_for_more_data() {
    let x = common::random_vectors(5, 300);
    let y = vec![Intention::Lk; 300];
    match train(&x, &y, &small_config(0), Path::new("lk.csv")) {
        Err(Error::Data { message, .. }) => assert!(message.contains("collect more data")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn bad_holdout_is_a_usage_error() {
    let (x, y) = separable(100);
    let cfg = TrainConfig {
        holdout: 1.0,
        ..small_config(0)
    };
    assert!(matches!(train(&x, &y, &cfg, Path::new("toy")), Err(Error::Usage(_))));
}

#[test]
fn tampered_bundles_are_rejected() {
    let (x, y) = separable(600);
    let (bundle, _) = train(&x, &y, &small_config(5), Path::new("toy")).unwrap();
    let dir = tempdir().unwrap();
    let path = dir.path().join("m.json");

    let mut wrong_layout = bundle.clone();
    wrong_layout.layout.columns.pop();
    fs::write(&path, wrong_layout.to_json()).unwrap();
    assert!(matches!(ModelBundle::load(&path), Err(Error::Data { .. })));

    let mut wrong_version = bundle.clone();
    wrong_version.version = 99;
    fs::write(&path, wrong_version.to_json()).unwrap();
    assert!(matches!(ModelBundle::load(&path), Err(Error::Data { .. })));

    let mut wrong_width = bundle;
    wrong_width.forest.width += 1;
    fs::write(&path, wrong_width.to_json()).unwrap();
    assert!(matches!(ModelBundle::load(&path), Err(Error::Data { .. })));

    fs::write(&path, "{}").unwrap();
    assert!(matches!(ModelBundle::load(&path), Err(Error::Data { .. })));
}

#[test]
fn bundle_lists_trapezoids_per_feature() {
    let (x, y) = separable(400);
    let (bundle, _) = train(&x, &y, &small_config(6), Path::new("toy")).unwrap();
    let doc: serde_json::Value = serde_json::from_str(&bundle.to_json()).unwrap();
    assert_eq!(doc["format"], "lcassist-model");
    assert_eq!(doc["version"], 1);
    let features = doc["fuzzy"]["features"].as_array().unwrap();
    assert_eq!(features.len(), 21);
    let mf = &features[0]["mfs"][0];
    for key in ["a1", "a2", "a3", "a4", "label"] {
        assert!(mf.get(key).is_some(), "{key}");
    }
    assert_eq!(doc["forest"]["params"]["max_depth"], 12);
}
