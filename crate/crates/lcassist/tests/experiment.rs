use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use lcassist::experiment::{collect, run_experiment, RunManifest, RunSpec};
use lcassist::model::{train, ModelBundle, TrainConfig};
use lcassist::report::{build_report, group_by_assistance, load_run, write_report, Group, Measure};
use lcassist::scenario::ScenarioFile;
use lcassist::Error;
use lcassist_core::forest::ForestParams;
use lcassist_core::labeling::label_log;
use lcassist_core::sim::ScenarioConfig;
use lcassist_core::{FeatureVector, Intention};
use tempfile::tempdir;

fn s1() -> ScenarioFile {
    ScenarioFile::new(ScenarioConfig::s1(1))
}

fn s2(compliance: f64) -> ScenarioFile {
    let mut f = ScenarioFile::new(ScenarioConfig::s2(1));
    f.driver.compliance = compliance;
    f
}

/// Small model trained once for the whole file.
fn model() -> &'static ModelBundle {
    static MODEL: OnceLock<ModelBundle> = OnceLock::new();
    MODEL.get_or_init(|| {
        let dir = tempdir().unwrap();
        let out = collect(&RunSpec::new(s1(), "s1.toml", 21, 900.0), dir.path()).unwrap();
        let x: Vec<FeatureVector> = out.records.iter().map(|r| r.features).collect();
        let cfg = TrainConfig {
            forest: ForestParams {
                tree_count: 20,
                ..ForestParams::default()
            },
            holdout: 0.0,
            ..TrainConfig::default()
        };
        train(&x, &out.labeling.ticks, &cfg, Path::new("s1")).unwrap().0
    })
}

fn assisted(seed: u64, duration: f64, compliance: f64) -> RunSpec {
    let mut spec = RunSpec::new(s2(compliance), "s2.toml", seed, duration);
    spec.model = Some(("model.json".into(), model().clone()));
    spec
}

fn control(seed: u64, duration: f64) -> RunSpec {
    RunSpec::new(s2(1.0), "s2.toml", seed, duration)
}

#[test]
fn collect_writes_a_tick_per_twentieth_second() {
    let dir = tempdir().unwrap();
    let out = collect(&RunSpec::new(s1(), "s1.toml", 3, 1800.0), dir.path()).unwrap();
    assert_eq!(out.records.len(), 36_000);
    let text = fs::read_to_string(dir.path().join("labeled.csv")).unwrap();
    assert_eq!(text.lines().count(), 36_001);
    assert!(!out.has_no_lane_changes());
    let m = RunManifest::load(dir.path()).unwrap();
    assert_eq!((m.ticks, m.seed, m.assisted), (36_000, 3, false));
    assert_eq!(m.scenario.scenario.seed, 3);
}

#[test]
fn collect_is_deterministic_per_seed() {
    let (a, b, c) = (tempdir().unwrap(), tempdir().unwrap(), tempdir().unwrap());
    let spec = RunSpec::new(s1(), "s1.toml", 8, 120.0);
    collect(&spec, a.path()).unwrap();
    collect(&spec, b.path()).unwrap();
    collect(&RunSpec::new(s1(), "s1.toml", 9, 120.0), c.path()).unwrap();
    for f in ["features.csv", "labeled.csv", "manifest.json"] {
        assert_eq!(
            fs::read(a.path().join(f)).unwrap(),
            fs::read(b.path().join(f)).unwrap(),
            "{f}"
        );
    }
    assert_ne!(
        fs::read(a.path().join("features.csv")).unwrap(),
        fs::read(c.path().join("features.csv")).unwrap()
    );
}

#[test]
fn world_log_is_opt_in() {
    let dir = tempdir().unwrap();
    let mut spec = RunSpec::new(s1(), "s1.toml", 1, 5.0);
    collect(&spec, dir.path()).unwrap();
    assert!(!dir.path().join("world.csv").exists());
    spec.world_log = true;
    collect(&spec, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("world.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 100 * 101);
}

#[test]
fn control_runs_emit_no_events() {
    let dir = tempdir().unwrap();
    let out = run_experiment(&control(4, 300.0), dir.path()).unwrap();
    assert!(out.events.is_empty());
    assert!(out.records.iter().all(|r| r.raw.is_none() && r.smoothed.is_none()));
    let text = fs::read_to_string(dir.path().join("events.csv")).unwrap();
    assert_eq!(text.lines().count(), 1);
}

#[test]
fn assisted_runs_log_predictions_and_events() {
    let dir = tempdir().unwrap();
    let out = run_experiment(&assisted(4, 300.0, 1.0), dir.path()).unwrap();
    assert!(!out.events.is_empty());
    assert!(out.records.iter().all(|r| r.smoothed.is_some()));
    for e in &out.events {
        assert_eq!(e.expires_tick, e.issued_tick + 40);
    }
    let logged = lcassist::logs::read_event_log(&dir.path().join("events.csv")).unwrap();
    assert_eq!(logged, out.events);
}

#[test]
fn unheeded_assistance_leaves_traffic_unchanged() {
    let (a, c) = (tempdir().unwrap(), tempdir().unwrap());
    let with = run_experiment(&assisted(6, 300.0, 0.0), a.path()).unwrap();
    let without = run_experiment(&control(6, 300.0), c.path()).unwrap();
    let fa: Vec<FeatureVector> = with.records.iter().map(|r| r.features).collect();
    let fc: Vec<FeatureVector> = without.records.iter().map(|r| r.features).collect();
    assert_eq!(fa, fc);
}

#[test]
fn mismatched_model_aborts_before_writing() {
    let dir = tempdir().unwrap();
    let out = dir.path().join("run");
    let mut spec = assisted(1, 10.0, 1.0);
    spec.model.as_mut().unwrap().1.forest.width += 1;
    assert!(matches!(run_experiment(&spec, &out), Err(Error::Session(_))));
    assert!(!out.exists());
}

#[test]
fn bad_durations_are_usage_errors() {
    let dir = tempdir().unwrap();
    for d in [0.0, -5.0, f64::NAN, 0.01] {
        let spec = RunSpec::new(s1(), "s1.toml", 1, d);
        assert!(matches!(collect(&spec, dir.path()), Err(Error::Usage(_))), "{d}");
    }
}

fn runs(specs: &[RunSpec]) -> (tempfile::TempDir, Vec<std::path::PathBuf>) {
    let root = tempdir().unwrap();
    let dirs = specs
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let d = root.path().join(format!("r{i}"));
            run_experiment(s, &d).unwrap();
            d
        })
        .collect();
    (root, dirs)
}

#[test]
fn report_counts_match_labels_and_is_deterministic() {
    let specs = [
        assisted(1, 200.0, 1.0),
        assisted(2, 200.0, 1.0),
        control(1, 200.0),
        control(2, 200.0),
    ];
    let (root, dirs) = runs(&specs);
    let loaded: Vec<_> = dirs.iter().map(|d| load_run(d).unwrap()).collect();
    for r in &loaded {
        let rows = lcassist::logs::read_run_log(&r.dir.join("run.csv")).unwrap();
        let fv: Vec<FeatureVector> = rows.iter().map(|r| r.row.features).collect();
        let labels = label_log(&fv).unwrap();
        for c in [Intention::Lcl, Intention::Lcr] {
            assert_eq!(r.metrics.maneuver_counts[c.index()], labels.count(c));
        }
    }
    let groups = group_by_assistance(loaded);
    assert_eq!(groups[0].runs.len(), 2);
    let report = build_report(&groups).unwrap();
    assert_eq!(report.groups[0].name, "assisted");
    let lcl = &report.groups[0].classes[Intention::Lcl.index()];
    let total: usize = groups[0].runs.iter().map(|r| r.metrics.maneuver_counts[1]).sum();
    assert_eq!(lcl.maneuvers, total);

    let (o1, o2) = (root.path().join("o1"), root.path().join("o2"));
    write_report(&report, &o1).unwrap();
    let again = build_report(&group_by_assistance(
        dirs.iter().map(|d| load_run(d).unwrap()).collect(),
    ))
    .unwrap();
    write_report(&again, &o2).unwrap();
    for f in ["report.json", "report.csv"] {
        assert_eq!(fs::read(o1.join(f)).unwrap(), fs::read(o2.join(f)).unwrap());
    }
    let csv = fs::read_to_string(o1.join("report.csv")).unwrap();
    assert!(csv.starts_with("group,class,direction,threshold,exceeded,maneuvers,ratio\n"));
    assert!(csv.contains("assisted,LCL,fl,3.5,"));
}

#[test]
fn identical_groups_are_never_significant() {
    let specs = [control(1, 200.0), control(2, 200.0), control(3, 200.0)];
    let (_root, dirs) = runs(&specs);
    let load = || dirs.iter().map(|d| load_run(d).unwrap()).collect::<Vec<_>>();
    let groups = [
        Group {
            name: "a".into(),
            runs: load(),
        },
        Group {
            name: "b".into(),
            runs: load(),
        },
    ];
    let report = build_report(&groups).unwrap();
    assert!(report.comparisons.iter().any(|c| c.measure == Measure::NearMiss));
    for c in &report.comparisons {
        if let Some(t) = &c.test {
            assert!(!t.significant);
            assert_eq!(t.p, 1.0);
        }
    }
}

#[test]
fn report_refuses_bad_groupings() {
    let mut other = control(2, 100.0);
    other.scenario = ScenarioFile::new(ScenarioConfig::s1(2));
    let specs = [control(1, 100.0), other, assisted(1, 100.0, 1.0)];
    let (_root, dirs) = runs(&specs);
    let load = |i: usize| load_run(&dirs[i]).unwrap();

    let empty = group_by_assistance(vec![load(0), load(1)]);
    assert!(matches!(build_report(&empty), Err(Error::Usage(_))));

    let mixed = [
        Group {
            name: "mixed".into(),
            runs: vec![load(0), load(1)],
        },
        Group {
            name: "b".into(),
            runs: vec![load(0), load(0)],
        },
    ];
    match build_report(&mixed) {
        Err(Error::Config(msg)) => assert!(msg.contains("mixes scenario")),
        other => panic!("{other:?}"),
    }
    assert!(matches!(build_report(&mixed[..1]), Err(Error::Usage(_))));
}
