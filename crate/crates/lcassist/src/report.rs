//! Group comparison reports over experiment run directories.
//!
//! Maneuvers are counted from the automatic labels of each run log, so the
//! totals match the labeling of the same log. Ratios are pooled per group
//! (summed exceeded counts over summed maneuver counts); t-tests compare the
//! per-run ratios of the two groups. Runs without a maneuver of a class
//! contribute no sample for that class.
//!
//! Outputs: `report.json` and `report.csv` with one row per
//! group, class, direction and sweep threshold.

use std::path::{Path, PathBuf};

use lcassist_core::labeling::label_log;
use lcassist_core::metrics::{run_metrics, welch_ttest, RunMetrics, RunSeries, SweepPoint, TTest};
use lcassist_core::warning::ThresholdTable;
use lcassist_core::{Direction, FeatureVector, Intention};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::experiment::{RunKind, RunManifest, RUN_LOG};
use crate::logs::{read_run_log, write_staged, CsvSink};

pub const REPORT_JSON: &str = "report.json";
pub const REPORT_CSV: &str = "report.csv";
pub const REPORT_CSV_HEADER: [&str; 7] = [
    "group",
    "class",
    "direction",
    "threshold",
    "exceeded",
    "maneuvers",
    "ratio",
];

#[derive(Debug, Clone)]
pub struct RunData {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub metrics: RunMetrics,
}

pub fn ttc_rows(features: &[FeatureVector]) -> Vec<[f64; 6]> {
    features.iter().map(|f| Direction::ALL.map(|d| f.ttc(d))).collect()
}

/// Reads one `run` directory and computes its measures.
pub fn load_run(dir: &Path) -> Result<RunData> {
    let manifest = RunManifest::load(dir)?;
    if manifest.kind == RunKind::Collect {
        return Err(Error::Usage(format!(
            "{} is a collection run, not an experiment run",
            dir.display()
        )));
    }
    let path = dir.join(RUN_LOG);
    let rows = read_run_log(&path)?;
    if rows.len() as u64 != manifest.ticks {
        return Err(Error::data(
            &path,
            format!("{} rows, manifest says {} ticks", rows.len(), manifest.ticks),
        ));
    }
    let features: Vec<FeatureVector> = rows.iter().map(|r| r.row.features).collect();
    let labeling = label_log(&features).map_err(|e| Error::data(&path, e.to_string()))?;
    let ttcs = ttc_rows(&features);
    let metrics = run_metrics(RunSeries::labeled(&labeling, &ttcs), &ThresholdTable::standard());
    Ok(RunData {
        dir: dir.to_owned(),
        manifest,
        metrics,
    })
}

#[derive(Debug, Clone)]
pub struct Group {
    pub name: String,
    pub runs: Vec<RunData>,
}

/// Splits runs into `assisted` and `control` groups, in that order.
pub fn group_by_assistance(runs: Vec<RunData>) -> Vec<Group> {
    let (a, c): (Vec<_>, Vec<_>) = runs.into_iter().partition(|r| r.manifest.assisted);
    vec![
        Group {
            name: "assisted".into(),
            runs: a,
        },
        Group {
            name: "control".into(),
            runs: c,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DirectionReport {
    pub direction: Direction,
    pub threshold: f64,
    pub exceeded: usize,
    pub maneuvers: usize,
    pub ratio: Option<f64>,
    pub sweep: Vec<SweepPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassReport {
    pub class: Intention,
    pub maneuvers: usize,
    pub near_miss_mean: Option<f64>,
    /// Per run, in run order.
    pub near_miss_runs: Vec<Option<f64>>,
    /// Sum of the pooled per-direction ratios.
    pub violation_sum: Option<f64>,
    pub directions: Vec<DirectionReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupReport {
    pub name: String,
    pub scenario: String,
    pub runs: Vec<String>,
    pub classes: Vec<ClassReport>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    /// Any monitored direction below 1 s.
    NearMiss,
    /// One direction below its warning threshold.
    Violation,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub class: Intention,
    pub measure: Measure,
    pub direction: Option<Direction>,
    pub n_a: usize,
    pub n_b: usize,
    /// Absent when either group has fewer than two samples.
    pub test: Option<TTest>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub format: &'static str,
    pub version: u32,
    /// `a` and `b` of every comparison.
    pub groups: Vec<GroupReport>,
    pub comparisons: Vec<Comparison>,
}

fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

fn group_report(g: &Group, table: &ThresholdTable) -> GroupReport {
    let mut classes = Vec::new();
    for class in Intention::ALL {
        let near_miss_runs: Vec<Option<f64>> = g.runs.iter().map(|r| r.metrics.near_miss[class.index()]).collect();
        let present: Vec<f64> = near_miss_runs.iter().flatten().copied().collect();
        let mut directions = Vec::new();
        for dir in table.monitored(class).iter() {
            let per_run: Vec<_> = g.runs.iter().filter_map(|r| r.metrics.direction(class, dir)).collect();
            let first = per_run[0];
            let sweep: Vec<SweepPoint> = (0..first.sweep.len())
                .map(|k| {
                    let exceeded = per_run.iter().map(|d| d.sweep[k].exceeded).sum();
                    let maneuvers = per_run.iter().map(|d| d.sweep[k].maneuvers).sum();
                    SweepPoint {
                        threshold: first.sweep[k].threshold,
                        exceeded,
                        maneuvers,
                        ratio: (maneuvers > 0).then(|| exceeded as f64 / maneuvers as f64),
                    }
                })
                .collect();
            let exceeded = per_run.iter().map(|d| d.exceeded).sum();
            let maneuvers = per_run.iter().map(|d| d.maneuvers).sum();
            directions.push(DirectionReport {
                direction: dir,
                threshold: first.threshold,
                exceeded,
                maneuvers,
                ratio: (maneuvers > 0).then(|| exceeded as f64 / maneuvers as f64),
                sweep,
            });
        }
        let ratios: Vec<f64> = directions.iter().filter_map(|d| d.ratio).collect();
        classes.push(ClassReport {
            class,
            maneuvers: g.runs.iter().map(|r| r.metrics.maneuver_counts[class.index()]).sum(),
            near_miss_mean: mean(&present),
            near_miss_runs,
            violation_sum: (!ratios.is_empty()).then(|| ratios.iter().sum()),
            directions,
        });
    }
    GroupReport {
        name: g.name.clone(),
        scenario: g.runs[0].manifest.scenario.scenario.name.clone(),
        runs: g.runs.iter().map(|r| r.dir.display().to_string()).collect(),
        classes,
    }
}

fn compare(class: Intention, measure: Measure, direction: Option<Direction>, a: &[f64], b: &[f64]) -> Comparison {
    Comparison {
        class,
        measure,
        direction,
        n_a: a.len(),
        n_b: b.len(),
        test: welch_ttest(a, b).ok(),
    }
}

/// Compares exactly two groups of at least two runs each.
pub fn build_report(groups: &[Group]) -> Result<Report> {
    if groups.len() != 2 {
        return Err(Error::Usage(format!(
            "a report compares two groups, got {}",
            groups.len()
        )));
    }
    for g in groups {
        if g.runs.len() < 2 {
            return Err(Error::Usage(format!(
                "group `{}` has {} run(s); t-tests need at least 2",
                g.name,
                g.runs.len()
            )));
        }
        let first = &g.runs[0];
        for r in &g.runs[1..] {
            if !first.manifest.scenario.same_setup(&r.manifest.scenario) {
                return Err(Error::Config(format!(
                    "group `{}` mixes scenario setups: {} and {} differ beyond the seed",
                    g.name,
                    first.dir.display(),
                    r.dir.display()
                )));
            }
        }
    }
    let table = ThresholdTable::standard();
    let (a, b) = (&groups[0].runs, &groups[1].runs);
    let mut comparisons = Vec::new();
    for class in Intention::ALL {
        let nm =
            |runs: &[RunData]| -> Vec<f64> { runs.iter().filter_map(|r| r.metrics.near_miss[class.index()]).collect() };
        comparisons.push(compare(class, Measure::NearMiss, None, &nm(a), &nm(b)));
        for dir in table.monitored(class).iter() {
            let vr = |runs: &[RunData]| -> Vec<f64> {
                runs.iter()
                    .filter_map(|r| r.metrics.direction(class, dir).and_then(|d| d.violation_ratio))
                    .collect()
            };
            comparisons.push(compare(class, Measure::Violation, Some(dir), &vr(a), &vr(b)));
        }
    }
    Ok(Report {
        format: "lcassist-report",
        version: 1,
        groups: groups.iter().map(|g| group_report(g, &table)).collect(),
        comparisons,
    })
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn write_report(report: &Report, out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    let mut json = serde_json::to_string_pretty(report).expect("reports always serialize");
    json.push('\n');
    write_staged(&out.join(REPORT_JSON), json.as_bytes())?;
    let mut sink = CsvSink::create(&out.join(REPORT_CSV), &REPORT_CSV_HEADER)?;
    for g in &report.groups {
        for c in &g.classes {
            for d in &c.directions {
                for p in &d.sweep {
                    sink.write([
                        g.name.clone(),
                        c.class.as_str().to_string(),
                        d.direction.as_str().to_string(),
                        p.threshold.to_string(),
                        p.exceeded.to_string(),
                        p.maneuvers.to_string(),
                        opt(p.ratio),
                    ])?;
                }
            }
        }
    }
    sink.finish()
}
