//! CSV tick logs.
//!
//! All logs carry a fixed header row and one record per tick (the world log:
//! one per tick per vehicle). Floats are written in Rust's shortest
//! round-trip form, so reading a log back yields bit-identical values.
//! Classes are encoded 0 = LK, 1 = LCL, 2 = LCR.
//!
//! | log | columns |
//! |---|---|
//! | feature | `tick`, the 24 features, `intent` (driver's maneuver) |
//! | labeled | feature columns, `class` |
//! | run | feature columns, `raw`, `smoothed` (empty for control runs), `stale` |
//! | event | `tick`, `kind`, `intention`, `directions`, `expires`, `audio` |
//! | world | `tick`, `id`, `behavior`, `s`, `lane`, `lateral_offset`, `v`, `a`, `heading`, `steering`, `indicator`, `gear` |
//!
//! Writers stage into `<file>.partial` and rename on success, so a failed
//! run leaves the partial file behind as a marker.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use lcassist_core::features::{FeatureVector, FEATURE_COUNT, FEATURE_NAMES};
use lcassist_core::sim::WorldState;
use lcassist_core::warning::{DirectionSet, EventKind, WarningEvent};
use lcassist_core::Intention;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureRow {
    pub tick: u64,
    pub features: FeatureVector,
    /// Maneuver the driver was executing (ground truth, not a label).
    pub intent: Intention,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRow {
    pub row: FeatureRow,
    pub raw: Option<Intention>,
    pub smoothed: Option<Intention>,
    /// Controls came from the staleness watchdog.
    pub stale: bool,
}

fn partial_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".partial");
    PathBuf::from(p)
}

/// Writes `bytes` to `<path>.partial` and renames it over `path`.
pub fn write_staged(path: &Path, bytes: &[u8]) -> Result<()> {
    let staged = partial_path(path);
    fs::write(&staged, bytes).map_err(|e| Error::io(&staged, e))?;
    fs::rename(&staged, path).map_err(|e| Error::io(path, e))
}

/// CSV writer that stages into `<path>.partial`.
pub struct CsvSink {
    path: PathBuf,
    staged: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvSink {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        let staged = partial_path(path);
        let file = File::create(&staged).map_err(|e| Error::io(&staged, e))?;
        let mut writer = csv::Writer::from_writer(BufWriter::new(file));
        writer.write_record(header).map_err(|e| Error::io(&staged, e.into()))?;
        Ok(CsvSink {
            path: path.to_owned(),
            staged,
            writer,
        })
    }

    pub fn write<I, T>(&mut self, record: I) -> Result<()>
    where
        I: IntoIterator<Item = T>,
        T: AsRef<[u8]>,
    {
        self.writer
            .write_record(record)
            .map_err(|e| Error::io(&self.staged, e.into()))
    }

    pub fn finish(self) -> Result<()> {
        let staged = self.staged;
        let mut inner = self
            .writer
            .into_inner()
            .map_err(|e| Error::io(&staged, e.into_error()))?;
        inner.flush().map_err(|e| Error::io(&staged, e))?;
        drop(inner);
        fs::rename(&staged, &self.path).map_err(|e| Error::io(&self.path, e))
    }
}

fn class_code(c: Intention) -> String {
    c.index().to_string()
}

fn opt_class(c: Option<Intention>) -> String {
    c.map(class_code).unwrap_or_default()
}

fn feature_header() -> Vec<&'static str> {
    let mut h = vec!["tick"];
    h.extend(FEATURE_NAMES);
    h.push("intent");
    h
}

fn feature_fields(r: &FeatureRow) -> Vec<String> {
    let mut out = Vec::with_capacity(FEATURE_COUNT + 2);
    out.push(r.tick.to_string());
    let values = r.features.to_array();
    for (i, v) in values.iter().enumerate() {
        // Ln, I and G are integers
        if i >= FEATURE_COUNT - 3 {
            out.push((*v as i64).to_string());
        } else {
            out.push(v.to_string());
        }
    }
    out.push(class_code(r.intent));
    out
}

pub fn feature_log_header() -> Vec<&'static str> {
    feature_header()
}

pub fn labeled_log_header() -> Vec<&'static str> {
    let mut h = feature_header();
    h.push("class");
    h
}

pub fn run_log_header() -> Vec<&'static str> {
    let mut h = feature_header();
    h.extend(["raw", "smoothed", "stale"]);
    h
}

pub const EVENT_LOG_HEADER: [&str; 6] = ["tick", "kind", "intention", "directions", "expires", "audio"];

pub const WORLD_LOG_HEADER: [&str; 12] = [
    "tick",
    "id",
    "behavior",
    "s",
    "lane",
    "lateral_offset",
    "v",
    "a",
    "heading",
    "steering",
    "indicator",
    "gear",
];

pub fn write_feature_log<'a>(path: &Path, rows: impl IntoIterator<Item = &'a FeatureRow>) -> Result<()> {
    let mut sink = CsvSink::create(path, &feature_header())?;
    for r in rows {
        sink.write(feature_fields(r))?;
    }
    sink.finish()
}

pub fn write_labeled_log(path: &Path, rows: &[FeatureRow], labels: &[Intention]) -> Result<()> {
    assert_eq!(rows.len(), labels.len(), "one label per row");
    let mut sink = CsvSink::create(path, &labeled_log_header())?;
    for (r, c) in rows.iter().zip(labels) {
        let mut f = feature_fields(r);
        f.push(class_code(*c));
        sink.write(f)?;
    }
    sink.finish()
}

pub fn write_run_log<'a>(path: &Path, rows: impl IntoIterator<Item = &'a RunRow>) -> Result<()> {
    let mut sink = CsvSink::create(path, &run_log_header())?;
    for r in rows {
        let mut f = feature_fields(&r.row);
        f.push(opt_class(r.raw));
        f.push(opt_class(r.smoothed));
        f.push(u8::from(r.stale).to_string());
        sink.write(f)?;
    }
    sink.finish()
}

pub fn write_event_log<'a>(path: &Path, events: impl IntoIterator<Item = &'a WarningEvent>) -> Result<()> {
    let mut sink = CsvSink::create(path, &EVENT_LOG_HEADER)?;
    for e in events {
        sink.write([
            e.issued_tick.to_string(),
            e.kind.as_str().to_string(),
            e.intention.as_str().to_string(),
            e.directions.to_string(),
            e.expires_tick.to_string(),
            u8::from(e.audio).to_string(),
        ])?;
    }
    sink.finish()
}

/// Streams one record per vehicle per tick.
pub struct WorldLog {
    sink: CsvSink,
}

impl WorldLog {
    pub fn create(path: &Path) -> Result<Self> {
        Ok(WorldLog {
            sink: CsvSink::create(path, &WORLD_LOG_HEADER)?,
        })
    }

    pub fn record(&mut self, world: &WorldState) -> Result<()> {
        let tick = world.tick().to_string();
        for v in world.vehicles() {
            let s = &v.state;
            self.sink.write([
                tick.clone(),
                s.id.to_string(),
                s.behavior.as_str().to_string(),
                s.s.to_string(),
                s.lane_index.to_string(),
                s.lateral_offset.to_string(),
                s.v.to_string(),
                s.a.to_string(),
                s.heading.to_string(),
                s.steering.to_string(),
                s.indicator.code().to_string(),
                s.gear.to_string(),
            ])?;
        }
        Ok(())
    }

    pub fn finish(self) -> Result<()> {
        self.sink.finish()
    }
}

/// Header-checked CSV reader that reports data errors with line numbers.
struct CsvSource {
    path: PathBuf,
    reader: csv::Reader<File>,
}

impl CsvSource {
    fn open(path: &Path, header: &[&str]) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut reader = csv::Reader::from_reader(file);
        let found = reader.headers().map_err(|e| Error::data(path, e.to_string()))?.clone();
        if found.iter().ne(header.iter().copied()) {
            return Err(Error::data(
                path,
                format!("unexpected header; expected {}", header.join(",")),
            ));
        }
        Ok(CsvSource {
            path: path.to_owned(),
            reader,
        })
    }

    fn for_each(mut self, mut f: impl FnMut(&Fields<'_>) -> Result<(), String>) -> Result<()> {
        let mut rec = csv::StringRecord::new();
        loop {
            match self.reader.read_record(&mut rec) {
                Ok(false) => return Ok(()),
                Ok(true) => {
                    let line = rec.position().map_or(0, |p| p.line());
                    f(&Fields(&rec)).map_err(|m| Error::data(&self.path, format!("line {line}: {m}")))?;
                }
                Err(e) => return Err(Error::data(&self.path, e.to_string())),
            }
        }
    }
}

struct Fields<'a>(&'a csv::StringRecord);

impl Fields<'_> {
    fn str(&self, i: usize) -> Result<&str, String> {
        self.0.get(i).ok_or_else(|| format!("missing column {i}"))
    }

    fn parse<T: std::str::FromStr>(&self, i: usize, what: &str) -> Result<T, String> {
        let s = self.str(i)?;
        s.parse().map_err(|_| format!("bad {what} `{s}`"))
    }

    fn class(&self, i: usize) -> Result<Intention, String> {
        let code: usize = self.parse(i, "class")?;
        Intention::from_index(code).ok_or_else(|| format!("class code {code} out of range"))
    }

    fn opt_class(&self, i: usize) -> Result<Option<Intention>, String> {
        if self.str(i)?.is_empty() {
            Ok(None)
        } else {
            self.class(i).map(Some)
        }
    }

    fn feature_row(&self) -> Result<FeatureRow, String> {
        let tick = self.parse(0, "tick")?;
        let mut values = [0.0; FEATURE_COUNT];
        for (i, v) in values.iter_mut().enumerate() {
            *v = self.parse(i + 1, FEATURE_NAMES[i])?;
        }
        let features = FeatureVector::from_array(&values);
        let stored = features.to_array();
        if let Some(i) = (0..FEATURE_COUNT).find(|&i| stored[i] != values[i]) {
            return Err(format!("{} = {} is outside its range", FEATURE_NAMES[i], values[i]));
        }
        Ok(FeatureRow {
            tick,
            features,
            intent: self.class(FEATURE_COUNT + 1)?,
        })
    }
}

pub fn read_feature_log(path: &Path) -> Result<Vec<FeatureRow>> {
    let mut out = Vec::new();
    CsvSource::open(path, &feature_header())?.for_each(|f| {
        out.push(f.feature_row()?);
        Ok(())
    })?;
    Ok(out)
}

pub fn read_labeled_log(path: &Path) -> Result<(Vec<FeatureRow>, Vec<Intention>)> {
    let (mut rows, mut labels) = (Vec::new(), Vec::new());
    CsvSource::open(path, &labeled_log_header())?.for_each(|f| {
        rows.push(f.feature_row()?);
        labels.push(f.class(FEATURE_COUNT + 2)?);
        Ok(())
    })?;
    Ok((rows, labels))
}

pub fn read_run_log(path: &Path) -> Result<Vec<RunRow>> {
    let mut out = Vec::new();
    CsvSource::open(path, &run_log_header())?.for_each(|f| {
        let n = FEATURE_COUNT + 2;
        out.push(RunRow {
            row: f.feature_row()?,
            raw: f.opt_class(n)?,
            smoothed: f.opt_class(n + 1)?,
            stale: f.parse::<u8>(n + 2, "stale flag")? != 0,
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn read_event_log(path: &Path) -> Result<Vec<WarningEvent>> {
    let mut out = Vec::new();
    CsvSource::open(path, &EVENT_LOG_HEADER)?.for_each(|f| {
        let kind: EventKind = f.parse(1, "kind")?;
        let intention: Intention = f.parse(2, "intention")?;
        let directions: DirectionSet = f.parse(3, "directions")?;
        let mut e = WarningEvent::new(kind, intention, directions, f.parse(0, "tick")?);
        if f.parse::<u64>(4, "expiry")? != e.expires_tick {
            return Err("expiry does not match the event lifetime".into());
        }
        e.audio = f.parse::<u8>(5, "audio flag")? != 0;
        out.push(e);
        Ok(())
    })?;
    Ok(out)
}
