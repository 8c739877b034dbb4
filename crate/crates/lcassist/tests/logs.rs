mod common;

use std::fs;

use lcassist::logs::*;
use lcassist::Error;
use lcassist_core::sim::{ScenarioConfig, WorldState};
use lcassist_core::warning::{DirectionSet, EventKind, WarningEvent};
use lcassist_core::{Direction, Intention};
use proptest::prelude::*;
use tempfile::tempdir;

fn rows(seed: u64, n: usize) -> Vec<FeatureRow> {
    common::random_vectors(seed, n)
        .into_iter()
        .enumerate()
        .map(|(i, features)| FeatureRow {
            tick: i as u64,
            features,
            intent: Intention::from_index(i % 3).unwrap(),
        })
        .collect()
}

#[test]
fn feature_log_round_trips_bit_for_bit() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("features.csv");
    let rows = rows(1, 500);
    write_feature_log(&path, &rows).unwrap();
    assert_eq!(read_feature_log(&path).unwrap(), rows);
    assert!(!dir.path().join("features.csv.partial").exists());
    let header = fs::read_to_string(&path).unwrap().lines().next().unwrap().to_string();
    assert!(header.starts_with("tick,v_ego,v_f,v_fl,v_fr,v_bl,v_br,v_b,d_f"));
    assert!(header.ends_with("alpha,S,Ln,I,G,intent"));
}

#[test]
fn labeled_and_run_logs_round_trip() {
    let dir = tempdir().unwrap();
    let rows = rows(2, 200);
    let labels: Vec<Intention> = rows.iter().map(|r| r.intent).collect();
    let lp = dir.path().join("labeled.csv");
    write_labeled_log(&lp, &rows, &labels).unwrap();
    assert_eq!(read_labeled_log(&lp).unwrap(), (rows.clone(), labels));

    let run: Vec<RunRow> = rows
        .iter()
        .enumerate()
        .map(|(i, r)| RunRow {
            row: *r,
            raw: (i % 4 != 0).then_some(Intention::Lcl),
            smoothed: (i % 4 != 0).then_some(Intention::Lk),
            stale: i.is_multiple_of(7),
        })
        .collect();
    let rp = dir.path().join("run.csv");
    write_run_log(&rp, &run).unwrap();
    assert_eq!(read_run_log(&rp).unwrap(), run);
}

#[test]
fn event_log_round_trips() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("events.csv");
    let events = vec![
        WarningEvent::new(
            EventKind::Warning,
            Intention::Lcl,
            DirectionSet::from_slice(&[Direction::Fl, Direction::Bl]),
            100,
        ),
        WarningEvent::new(
            EventKind::Approval,
            Intention::Lcr,
            DirectionSet::from_slice(&[Direction::Fr]),
            140,
        ),
    ];
    write_event_log(&path, &events).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "100,warning,LCL,fl|bl,140,1");
    assert_eq!(read_event_log(&path).unwrap(), events);
}

#[test]
fn wrong_expiry_is_rejected() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("events.csv");
    fs::write(
        &path,
        "tick,kind,intention,directions,expires,audio\n100,warning,LK,f,120,1\n",
    )
    .unwrap();
    assert!(matches!(read_event_log(&path), Err(Error::Data { .. })));
}

#[test]
fn out_of_range_value_names_column_and_line() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("features.csv");
    write_feature_log(&path, &rows(3, 5)).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let mut lines: Vec<String> = text.lines().map(String::from).collect();
    let mut fields: Vec<String> = lines[3].split(',').map(String::from).collect();
    fields[14] = "13.5".into(); // TTC_f
    lines[3] = fields.join(",");
    fs::write(&path, lines.join("\n") + "\n").unwrap();
    let err = read_feature_log(&path).unwrap_err().to_string();
    assert!(err.contains("line 4"), "{err}");
    assert!(err.contains("TTC_f"), "{err}");
}

#[test]
fn header_mismatch_is_a_data_error() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("features.csv");
    write_feature_log(&path, &rows(4, 3)).unwrap();
    assert!(matches!(read_labeled_log(&path), Err(Error::Data { .. })));
    assert!(matches!(
        read_feature_log(&dir.path().join("missing.csv")),
        Err(Error::Io { .. })
    ));
}

#[test]
fn world_log_has_one_row_per_vehicle_per_tick() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("world.csv");
    let mut world = WorldState::spawn(&ScenarioConfig::s1(5)).unwrap();
    let mut log = WorldLog::create(&path).unwrap();
    for _ in 0..20 {
        log.record(&world).unwrap();
        world.step(&Default::default()).unwrap();
    }
    log.finish().unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), WORLD_LOG_HEADER.join(","));
    assert_eq!(text.lines().count(), 1 + 20 * 101);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]
    #[test]
    fn any_in_range_row_round_trips(seed in any::<u64>(), n in 1usize..20) {
        let dir = tempdir().unwrap();
        let path = dir.path().join("f.csv");
        let rows = rows(seed, n);
        write_feature_log(&path, &rows).unwrap();
        prop_assert_eq!(read_feature_log(&path).unwrap(), rows);
    }
}
