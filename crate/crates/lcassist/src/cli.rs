//! `lcassist` command line.
//!
//! Exit codes: 0 success, 2 usage error, 3 data or configuration error.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{ArgGroup, Args, Parser, Subcommand};
use lcassist_core::forest::ForestParams;
use lcassist_core::Intention;

use crate::bridge::{self, Bridge, ServeOptions, SystemClock};
use crate::error::{Error, Result};
use crate::experiment::{self, RunSpec};
use crate::logs::read_labeled_log;
use crate::model::{self, ModelBundle, TrainConfig};
use crate::report::{self, Group};
use crate::scenario::ScenarioFile;

#[derive(Debug, Parser)]
#[command(name = "lcassist", version, about = "Intention-based lane change assistance harness")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Drive the synthetic driver unassisted and write feature and labeled logs.
    Collect(CollectArgs),
    /// Train a model bundle from a labeled log.
    Train(TrainArgs),
    /// Run an assisted or control experiment.
    Run(RunArgs),
    /// Compare two groups of experiment runs.
    Report(ReportArgs),
    /// Drive the ego from a cockpit client over WebSocket.
    Serve(ServeArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    #[arg(long)]
    pub scenario: PathBuf,
    /// Overrides the scenario's seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Seconds of simulated time.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Also write the per-vehicle world log.
    #[arg(long)]
    pub world_log: bool,
}

#[derive(Debug, Args)]
pub struct CollectArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Labeled log (labeled.csv).
    #[arg(long)]
    pub labeled: PathBuf,
    /// Bundle file to write.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Share of the log, from its end, held out for scoring.
    #[arg(long, default_value_t = 0.2)]
    pub holdout: f64,
    /// Extra labeled log to score the model on.
    #[arg(long)]
    pub eval: Option<PathBuf>,
    #[arg(long, default_value = "synthetic")]
    pub driver_id: String,
    #[arg(long, default_value_t = 100)]
    pub trees: usize,
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("mode").required(true).args(["assisted", "control"])))]
pub struct RunArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub assisted: bool,
    #[arg(long)]
    pub control: bool,
    /// Overrides the driver's compliance, 0..1.
    #[arg(long)]
    pub compliance: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directories, grouped into assisted and control.
    #[arg(required_unless_present = "group")]
    pub runs: Vec<PathBuf>,
    /// Explicit group instead: NAME=DIR[,DIR...]. Give exactly two.
    #[arg(long, conflicts_with = "runs")]
    pub group: Vec<String>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Assist the human driver with this bundle.
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    #[arg(long, default_value_t = bridge::DEFAULT_PORT)]
    pub port: u16,
    /// Where to write the run outputs.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

const COLLECT_SECONDS: f64 = 1800.0;
const RUN_SECONDS: f64 = 1500.0;

fn spec(args: &ScenarioArgs, default_duration: f64) -> Result<RunSpec> {
    let file = ScenarioFile::load(&args.scenario)?;
    let seed = args.seed.unwrap_or(file.scenario.seed);
    let mut spec = RunSpec::new(
        file,
        args.scenario.display().to_string(),
        seed,
        args.duration.unwrap_or(default_duration),
    );
    spec.world_log = args.world_log;
    spec.ticks()?;
    Ok(spec)
}

fn load_model(path: &Path) -> Result<(String, ModelBundle)> {
    Ok((path.display().to_string(), ModelBundle::load(path)?))
}

fn counts_line(counts: [usize; 3]) -> String {
    Intention::ALL
        .iter()
        .map(|c| format!("{} {}", c, counts[c.index()]))
        .collect::<Vec<_>>()
        .join(", ")
}

fn eval_line(e: &model::Evaluation) -> String {
    let recall = Intention::ALL
        .iter()
        .map(|c| match e.recall[c.index()] {
            Some(r) => format!("{c} {r:.3}"),
            None => format!("{c} n/a"),
        })
        .collect::<Vec<_>>()
        .join(", ");
    format!("{} rows, accuracy {:.4}, recall {recall}", e.rows, e.accuracy)
}

fn collect(args: CollectArgs) -> Result<()> {
    let spec = spec(&args.scenario, COLLECT_SECONDS)?;
    let outcome = experiment::collect(&spec, &args.out)?;
    let counts = outcome.maneuver_counts();
    println!(
        "collected {} ticks into {}; lane changes: LCL {}, LCR {}",
        outcome.records.len(),
        args.out.display(),
        counts[Intention::Lcl.index()],
        counts[Intention::Lcr.index()]
    );
    if outcome.has_no_lane_changes() {
        eprintln!("warning: the log holds no lane change; a model trained on it only knows LK");
    }
    Ok(())
}

fn train(args: TrainArgs) -> Result<()> {
    let (rows, labels) = read_labeled_log(&args.labeled)?;
    let features: Vec<_> = rows.iter().map(|r| r.features).collect();
    let config = TrainConfig {
        forest: ForestParams {
            seed: args.seed,
            tree_count: args.trees,
            ..ForestParams::default()
        },
        driver_id: args.driver_id,
        holdout: args.holdout,
        ..TrainConfig::default()
    };
    let (bundle, summary) = model::train(&features, &labels, &config, &args.labeled)?;
    bundle.save(&args.out)?;
    println!(
        "trained {} trees on {} rows ({}); wrote {}",
        bundle.forest.tree_count,
        summary.train_rows,
        counts_line(summary.class_counts),
        args.out.display()
    );
    if let Some(e) = &summary.holdout {
        println!("held out: {}", eval_line(e));
    }
    if let Some(path) = &args.eval {
        let (rows, labels) = read_labeled_log(path)?;
        let features: Vec<_> = rows.iter().map(|r| r.features).collect();
        println!(
            "{}: {}",
            path.display(),
            eval_line(&model::evaluate(&bundle, &features, &labels))
        );
    }
    Ok(())
}

fn run(args: RunArgs) -> Result<()> {
    let mut spec = spec(&args.scenario, RUN_SECONDS)?;
    if let Some(c) = args.compliance {
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::Usage(format!("compliance must be in [0, 1], got {c}")));
        }
        spec.scenario.driver.compliance = c;
    }
    if args.assisted {
        let path = args
            .model
            .as_deref()
            .ok_or_else(|| Error::Usage("--assisted needs --model".into()))?;
        spec.model = Some(load_model(path)?);
    }
    let outcome = experiment::run_experiment(&spec, &args.out)?;
    println!(
        "{} run of {} ticks into {}; {} events; warnings perceived {}, heeded {}",
        if args.assisted { "assisted" } else { "control" },
        outcome.records.len(),
        args.out.display(),
        outcome.events.len(),
        outcome.warnings_perceived,
        outcome.warnings_complied
    );
    Ok(())
}

fn parse_group(text: &str) -> Result<(String, Vec<PathBuf>)> {
    let (name, dirs) = text
        .split_once('=')
        .ok_or_else(|| Error::Usage(format!("group `{text}` is not NAME=DIR[,DIR...]")))?;
    let dirs: Vec<PathBuf> = dirs.split(',').filter(|d| !d.is_empty()).map(PathBuf::from).collect();
    Ok((name.to_string(), dirs))
}

fn report(args: ReportArgs) -> Result<()> {
    let groups = if args.group.is_empty() {
        let runs = args
            .runs
            .iter()
            .map(|d| report::load_run(d))
            .collect::<Result<Vec<_>>>()?;
        report::group_by_assistance(runs)
    } else {
        let mut groups = Vec::new();
        for g in &args.group {
            let (name, dirs) = parse_group(g)?;
            let runs = dirs.iter().map(|d| report::load_run(d)).collect::<Result<Vec<_>>>()?;
            groups.push(Group { name, runs });
        }
        groups
    };
    let rep = report::build_report(&groups)?;
    report::write_report(&rep, &args.out)?;
    for c in rep.comparisons.iter().filter(|c| c.direction.is_none()) {
        match &c.test {
            Some(t) => println!(
                "{} near-miss: {} {:.4} vs {} {:.4}, t {:.3}, p {:.4}{}",
                c.class,
                rep.groups[0].name,
                t.mean_a,
                rep.groups[1].name,
                t.mean_b,
                t.t,
                t.p,
                if t.significant { " (significant)" } else { "" }
            ),
            None => println!("{} near-miss: too few runs with this maneuver", c.class),
        }
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn serve(args: ServeArgs) -> Result<()> {
    let mut spec = spec(&args.scenario, RUN_SECONDS)?;
    if let Some(path) = &args.model {
        spec.model = Some(load_model(path)?);
    }
    let bridge = Bridge::bind((args.host.as_str(), args.port), Arc::new(SystemClock::new()))?;
    println!("listening on ws://{}", bridge.local_addr());
    let outcome = bridge::serve(&spec, &bridge, &ServeOptions { realtime: true }, args.out.as_deref())?;
    println!(
        "served {} ticks, {} frames published, {} malformed messages",
        outcome.records.len(),
        outcome.frames_published,
        outcome.malformed
    );
    Ok(())
}

pub fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Collect(a) => collect(a),
        Command::Train(a) => train(a),
        Command::Run(a) => run(a),
        Command::Report(a) => report(a),
        Command::Serve(a) => serve(a),
    }
}

pub fn main<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        // help and version exit 0, parse errors 2
        Err(e) => e.exit(),
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
