//! Collection and experiment runs.
//!
//! Every run writes into its own output directory:
//!
//! * `collect`: `features.csv`, `labeled.csv`, `manifest.json`
//! * `run` / `serve`: `run.csv`, `events.csv`, `manifest.json`
//!
//! plus `world.csv` when the world log is requested. Runs are deterministic
//! per (scenario, seed, model): the same inputs give byte-identical files.

use std::fs;
use std::path::{Path, PathBuf};

use lcassist_core::driver::{EgoController, SyntheticDriver};
use lcassist_core::labeling::{label_log, Labeling};
use lcassist_core::session::{Session, TickRecord};
use lcassist_core::sim::WorldState;
use lcassist_core::types::seconds_to_ticks;
use lcassist_core::warning::{ThresholdTable, WarningEvent};
use lcassist_core::{FeatureVector, Intention};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::logs::{
    write_event_log, write_feature_log, write_labeled_log, write_run_log, write_staged, FeatureRow, RunRow, WorldLog,
};
use crate::model::ModelBundle;
use crate::scenario::ScenarioFile;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const FEATURE_LOG: &str = "features.csv";
pub const LABELED_LOG: &str = "labeled.csv";
pub const RUN_LOG: &str = "run.csv";
pub const EVENT_LOG: &str = "events.csv";
pub const WORLD_LOG: &str = "world.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunKind {
    Collect,
    Run,
    Serve,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DriverKind {
    Synthetic,
    /// Controls from the cockpit bridge.
    Bridge,
}

/// `manifest.json` of a run directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: RunKind,
    /// Scenario file as given on the command line.
    pub scenario_ref: String,
    /// Scenario actually run: seed and driver overrides applied.
    pub scenario: ScenarioFile,
    pub seed: u64,
    pub driver: DriverKind,
    pub model: Option<String>,
    pub assisted: bool,
    pub duration: f64,
    pub ticks: u64,
    /// File names inside the run directory.
    pub outputs: Vec<String>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: RunManifest = serde_json::from_str(&text).map_err(|e| Error::data(&path, e.to_string()))?;
        m.check().map_err(|msg| Error::data(&path, msg))?;
        Ok(m)
    }

    fn save(&self, dir: &Path) -> Result<()> {
        let mut s = serde_json::to_string_pretty(self).expect("manifests always serialize");
        s.push('\n');
        write_staged(&dir.join(MANIFEST_FILE), s.as_bytes())
    }

    fn check(&self) -> Result<(), String> {
        if self.assisted && self.model.is_none() {
            return Err("assisted runs need a model".into());
        }
        if self.duration.is_nan() || self.duration <= 0.0 || self.ticks == 0 {
            return Err("duration must be positive".into());
        }
        Ok(())
    }
}

/// Inputs shared by every run kind.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub scenario: ScenarioFile,
    pub scenario_ref: String,
    /// Overrides the scenario's seed; also seeds the synthetic driver.
    pub seed: u64,
    /// Seconds.
    pub duration: f64,
    /// Model reference and bundle. Present exactly for assisted runs.
    pub model: Option<(String, ModelBundle)>,
    pub world_log: bool,
}

impl RunSpec {
    pub fn new(scenario: ScenarioFile, scenario_ref: impl Into<String>, seed: u64, duration: f64) -> Self {
        RunSpec {
            scenario,
            scenario_ref: scenario_ref.into(),
            seed,
            duration,
            model: None,
            world_log: false,
        }
    }

    pub fn ticks(&self) -> Result<u64> {
        if !self.duration.is_finite() || self.duration <= 0.0 {
            return Err(Error::Usage(format!(
                "duration must be positive, got {}",
                self.duration
            )));
        }
        match seconds_to_ticks(self.duration) {
            0 => Err(Error::Usage(format!(
                "duration {} s is shorter than one tick",
                self.duration
            ))),
            n => Ok(n),
        }
    }

    /// Scenario with the seed applied.
    pub fn effective_scenario(&self) -> ScenarioFile {
        let mut s = self.scenario.clone();
        s.scenario.seed = self.seed;
        s
    }

    pub fn spawn(&self) -> Result<WorldState> {
        WorldState::spawn(&self.effective_scenario().scenario).map_err(|e| Error::Config(e.to_string()))
    }

    pub(crate) fn manifest(&self, kind: RunKind, driver: DriverKind, outputs: &[&str]) -> Result<RunManifest> {
        let mut outputs: Vec<String> = outputs.iter().map(|s| s.to_string()).collect();
        if self.world_log {
            outputs.push(WORLD_LOG.into());
        }
        Ok(RunManifest {
            kind,
            scenario_ref: self.scenario_ref.clone(),
            scenario: self.effective_scenario(),
            seed: self.seed,
            driver,
            model: self.model.as_ref().map(|(r, _)| r.clone()),
            assisted: self.model.is_some(),
            duration: self.duration,
            ticks: self.ticks()?,
            outputs,
        })
    }
}

pub(crate) fn prepare_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out, e))
}

pub(crate) fn feature_rows(records: &[TickRecord]) -> Vec<FeatureRow> {
    records
        .iter()
        .map(|r| FeatureRow {
            tick: r.tick,
            features: r.features,
            intent: r.intent,
        })
        .collect()
}

/// Steps `session` for `ticks` ticks, logging world snapshots before each
/// step when `world` is set.
pub(crate) fn drive<C: EgoController>(
    session: &mut Session<C>,
    ticks: u64,
    mut world: Option<&mut WorldLog>,
) -> Result<Vec<TickRecord>> {
    let mut out = Vec::with_capacity(ticks as usize);
    for _ in 0..ticks {
        if let Some(w) = world.as_deref_mut() {
            w.record(session.world())?;
        }
        out.push(session.step()?);
    }
    Ok(out)
}

fn open_world_log(spec: &RunSpec, out: &Path) -> Result<Option<WorldLog>> {
    spec.world_log
        .then(|| WorldLog::create(&out.join(WORLD_LOG)))
        .transpose()
}

#[derive(Debug, Clone)]
pub struct CollectOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub records: Vec<TickRecord>,
    pub labeling: Labeling,
}

impl CollectOutcome {
    pub fn maneuver_counts(&self) -> [usize; 3] {
        Intention::ALL.map(|c| self.labeling.count(c))
    }

    /// No lane change in the whole log: training will only see LK.
    pub fn has_no_lane_changes(&self) -> bool {
        self.labeling.maneuvers.is_empty()
    }
}

/// Unassisted synthetic-driver run producing a feature and labeled log.
pub fn collect(spec: &RunSpec, out: &Path) -> Result<CollectOutcome> {
    if spec.model.is_some() {
        return Err(Error::Usage("collection runs are never assisted".into()));
    }
    let ticks = spec.ticks()?;
    let manifest = spec.manifest(RunKind::Collect, DriverKind::Synthetic, &[FEATURE_LOG, LABELED_LOG])?;
    prepare_dir(out)?;
    let driver = SyntheticDriver::new(spec.scenario.driver.clone(), spec.seed);
    let mut session = Session::new(spec.spawn()?, driver, None);
    let mut world = open_world_log(spec, out)?;
    let records = drive(&mut session, ticks, world.as_mut())?;
    let features: Vec<FeatureVector> = records.iter().map(|r| r.features).collect();
    let labeling = label_log(&features).map_err(|e| Error::data(out.join(FEATURE_LOG), e.to_string()))?;
    let rows = feature_rows(&records);
    write_feature_log(&out.join(FEATURE_LOG), &rows)?;
    write_labeled_log(&out.join(LABELED_LOG), &rows, &labeling.ticks)?;
    if let Some(w) = world {
        w.finish()?;
    }
    manifest.save(out)?;
    Ok(CollectOutcome {
        dir: out.to_owned(),
        manifest,
        records,
        labeling,
    })
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    pub records: Vec<TickRecord>,
    pub events: Vec<WarningEvent>,
    /// Warnings the driver perceived and complied with.
    pub warnings_perceived: u64,
    pub warnings_complied: u64,
}

pub(crate) fn write_run_outputs(
    out: &Path,
    manifest: &RunManifest,
    records: &[TickRecord],
    stale: &[bool],
) -> Result<Vec<WarningEvent>> {
    let rows: Vec<RunRow> = records
        .iter()
        .zip(stale)
        .map(|(r, &stale)| RunRow {
            row: FeatureRow {
                tick: r.tick,
                features: r.features,
                intent: r.intent,
            },
            raw: r.raw,
            smoothed: r.smoothed,
            stale,
        })
        .collect();
    let events: Vec<WarningEvent> = records.iter().filter_map(|r| r.event).collect();
    write_run_log(&out.join(RUN_LOG), &rows)?;
    write_event_log(&out.join(EVENT_LOG), &events)?;
    manifest.save(out)?;
    Ok(events)
}

/// Assisted (model present) or control run with the synthetic driver.
pub fn run_experiment(spec: &RunSpec, out: &Path) -> Result<RunOutcome> {
    let ticks = spec.ticks()?;
    let manifest = spec.manifest(RunKind::Run, DriverKind::Synthetic, &[RUN_LOG, EVENT_LOG])?;
    // mismatched bundles abort before anything is written
    let assistant = spec
        .model
        .as_ref()
        .map(|(_, b)| b.assistant(ThresholdTable::standard()))
        .transpose()?;
    prepare_dir(out)?;
    let driver = SyntheticDriver::new(spec.scenario.driver.clone(), spec.seed);
    let mut session = Session::new(spec.spawn()?, driver, assistant);
    let mut world = open_world_log(spec, out)?;
    let records = drive(&mut session, ticks, world.as_mut())?;
    if let Some(w) = world {
        w.finish()?;
    }
    let events = write_run_outputs(out, &manifest, &records, &vec![false; records.len()])?;
    let (warnings_perceived, warnings_complied) = session.controller().warning_counts();
    Ok(RunOutcome {
        dir: out.to_owned(),
        manifest,
        records,
        events,
        warnings_perceived,
        warnings_complied,
    })
}
