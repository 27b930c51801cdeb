//! Command-line front end: argument and scenario-file parsing, dispatch, and
//! artifact output.
//!
//! Scenario files hold `key = value` lines using the flag names (`lambda1`,
//! `threshold`, `horizon`, ...), `#` comments, and optional sections for
//! scripted X-model runs:
//!
//! ```text
//! horizon = 12
//! [arrivals]
//! 0 1
//! 1 2
//! [z1]
//! 10
//! [z2]
//! 5
//! 6
//! [thresholds]
//! t1 = 5
//! t2 = 1
//! ```
//!
//! Arrival lines are `time type`; `z1`/`z2` list jump times. Values in the
//! file override flags.

use std::collections::BTreeMap;
use std::fs;
use std::ops::ControlFlow;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::artifacts::{
    create, write_job_records_csv, write_json, write_jsonl, write_sweep_csv, write_violations_jsonl, CoupledTraceWriter,
    ReplaySummary, SystemTraceWriter,
};
use crate::coupling::{
    dominance_violations, lower_bound_violations, run_coupled_with, service_slack_violations, subset_violations,
    Companion, Inequality, Pair, TraceSample, ViolationReport,
};
use crate::dynamics::{Discipline, JobType, ScenarioConfig, Simulation, SystemState};
use crate::error::{Error, Result};
use crate::events::{EventStreamSet, Time};
use crate::stability::{
    boundary_distance, fcfs_equivalence_check, on_boundary, pasta_check, summarize_sweep, sweep_region, DriftSettings,
    SweepSettings,
};
use crate::xmodel::{replay_script, search_violations, ScriptedRun, XConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CHECK_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

const DEFAULT_HORIZON: f64 = 1e4;

#[derive(Debug, Parser)]
#[command(name = "nq", about = "N-model threshold queue simulator and dominance checker")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one system and write its trace.
    Simulate(ScenarioArgs),
    /// Run a coupled pair and check its inequalities.
    Couple {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long, value_enum)]
        pair: Option<PairArg>,
        /// Check the reversed inequalities; a working checker must then fail.
        #[arg(long)]
        negative_control: bool,
    },
    /// Classify a grid of arrival rates as stable or unstable.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// `start:end:step`, applied to both arrival rates.
        #[arg(long)]
        grid: Option<String>,
        /// Comma-separated thresholds.
        #[arg(long)]
        thresholds: Option<String>,
        /// Drop grid points closer than this to a boundary line.
        #[arg(long)]
        min_boundary_distance: Option<f64>,
    },
    /// Poisson check of the young type-1 queue in the UB system.
    Pasta {
        #[command(flatten)]
        scenario: ScenarioArgs,
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Compare the UB waiting count with the plain FCFS N-model.
    FcfsEquiv(ScenarioArgs),
    /// Replay the scripted X-model counterexample, or a script from --config.
    ReplayTable1 {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Search random X-model paths for dominance violations.
    XSearch {
        #[command(flatten)]
        scenario: ScenarioArgs,
        /// Number of seeds, starting at --seed.
        #[arg(long)]
        seeds: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Model {
    Or,
    Ub,
    Fcfs,
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum PairArg {
    OrUb,
    OrMm1,
}

#[derive(Debug, Clone, Default, Args)]
struct ScenarioArgs {
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    mu1: Option<f64>,
    #[arg(long)]
    mu2: Option<f64>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    t1: Option<f64>,
    #[arg(long)]
    t2: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replications: Option<usize>,
    #[arg(long, value_enum)]
    model: Option<Model>,
    /// Scenario file; its values override flags.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

/// Parsed scenario file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScenarioFile {
    pub values: BTreeMap<String, String>,
    pub arrivals: Vec<(Time, JobType)>,
    pub z1: Vec<Time>,
    pub z2: Vec<Time>,
    /// Whether any of the script sections appeared.
    pub scripted: bool,
}

const FILE_KEYS: [&str; 17] = [
    "lambda1",
    "lambda2",
    "mu1",
    "mu2",
    "threshold",
    "t1",
    "t2",
    "horizon",
    "seed",
    "replications",
    "model",
    "pair",
    "grid",
    "thresholds",
    "samples",
    "seeds",
    "min_boundary_distance",
];

fn usage(msg: impl Into<String>) -> Error {
    Error::Usage(msg.into())
}

fn number<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value.trim().parse().map_err(|_| usage(format!("{key}: cannot parse '{}'", value.trim())))
}

pub fn parse_scenario_file(text: &str) -> Result<ScenarioFile> {
    let mut file = ScenarioFile::default();
    let mut section = String::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let at = |msg: String| usage(format!("line {}: {msg}", lineno + 1));
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.trim().to_string();
            match section.as_str() {
                "arrivals" | "z1" | "z2" => file.scripted = true,
                "thresholds" | "scenario" => {}
                other => return Err(at(format!("unknown section [{other}]"))),
            }
            continue;
        }
        match section.as_str() {
            "arrivals" => {
                let mut parts = line.split_whitespace();
                let (Some(t), Some(k), None) = (parts.next(), parts.next(), parts.next()) else {
                    return Err(at("expected 'time type'".into()));
                };
                let job_type = JobType::from_number(number("type", k)?).ok_or_else(|| at(format!("job type {k}")))?;
                file.arrivals.push((number("time", t)?, job_type));
            }
            "z1" | "z2" => {
                for t in line.split_whitespace() {
                    let t = number("time", t)?;
                    if section == "z1" { &mut file.z1 } else { &mut file.z2 }.push(t);
                }
            }
            _ => {
                let (key, value) = line.split_once('=').ok_or_else(|| at("expected 'key = value'".into()))?;
                let key = key.trim();
                if section == "thresholds" && !matches!(key, "t1" | "t2") {
                    return Err(at(format!("unknown threshold key '{key}'")));
                }
                if !FILE_KEYS.contains(&key) {
                    return Err(at(format!("unknown key '{key}'")));
                }
                file.values.insert(key.to_string(), value.trim().to_string());
            }
        }
    }
    Ok(file)
}

fn load_scenario_file(path: &Path) -> Result<ScenarioFile> {
    parse_scenario_file(&fs::read_to_string(path)?)
}

/// Flag values with scenario-file values laid over them.
#[derive(Debug, Clone, Default)]
struct Settings {
    lambda1: Option<f64>,
    lambda2: Option<f64>,
    mu1: Option<f64>,
    mu2: Option<f64>,
    threshold: Option<f64>,
    t1: Option<f64>,
    t2: Option<f64>,
    horizon: Option<f64>,
    seed: Option<u64>,
    replications: Option<usize>,
    model: Option<Model>,
    pair: Option<PairArg>,
    grid: Option<String>,
    thresholds: Option<String>,
    samples: Option<usize>,
    seeds: Option<u64>,
    min_boundary_distance: Option<f64>,
    script: Option<ScenarioFile>,
}

impl Settings {
    fn from_args(a: &ScenarioArgs) -> Result<Self> {
        let mut s = Settings {
            lambda1: a.lambda1,
            lambda2: a.lambda2,
            mu1: a.mu1,
            mu2: a.mu2,
            threshold: a.threshold,
            t1: a.t1,
            t2: a.t2,
            horizon: a.horizon,
            seed: a.seed,
            replications: a.replications,
            model: a.model,
            ..Default::default()
        };
        if let Some(path) = &a.config {
            s.overlay(load_scenario_file(path)?)?;
        }
        Ok(s)
    }

    fn overlay(&mut self, file: ScenarioFile) -> Result<()> {
        for (key, value) in &file.values {
            let v = value.as_str();
            match key.as_str() {
                "lambda1" => self.lambda1 = Some(number(key, v)?),
                "lambda2" => self.lambda2 = Some(number(key, v)?),
                "mu1" => self.mu1 = Some(number(key, v)?),
                "mu2" => self.mu2 = Some(number(key, v)?),
                "threshold" => self.threshold = Some(number(key, v)?),
                "t1" => self.t1 = Some(number(key, v)?),
                "t2" => self.t2 = Some(number(key, v)?),
                "horizon" => self.horizon = Some(number(key, v)?),
                "seed" => self.seed = Some(number(key, v)?),
                "replications" => self.replications = Some(number(key, v)?),
                "model" => self.model = Some(Model::from_str(v, true).map_err(|_| usage(format!("model: '{v}'")))?),
                "pair" => self.pair = Some(PairArg::from_str(v, true).map_err(|_| usage(format!("pair: '{v}'")))?),
                "grid" => self.grid = Some(v.to_string()),
                "thresholds" => self.thresholds = Some(v.to_string()),
                "samples" => self.samples = Some(number(key, v)?),
                "seeds" => self.seeds = Some(number(key, v)?),
                "min_boundary_distance" => self.min_boundary_distance = Some(number(key, v)?),
                _ => unreachable!("keys are validated while parsing"),
            }
        }
        if file.scripted {
            self.script = Some(file);
        }
        Ok(())
    }

    fn required(&self, name: &str, v: Option<f64>) -> Result<f64> {
        v.ok_or_else(|| usage(format!("missing required --{name}")))
    }

    fn check_threshold_flags(&self) -> Result<()> {
        let x = self.model == Some(Model::X);
        if x && self.threshold.is_some() {
            return Err(usage("--threshold conflicts with --model x; use --t1/--t2"));
        }
        if !x && (self.t1.is_some() || self.t2.is_some()) {
            return Err(usage("--t1/--t2 require --model x"));
        }
        Ok(())
    }

    fn scenario(&self, discipline: Discipline) -> Result<ScenarioConfig> {
        self.check_threshold_flags()?;
        let threshold_t = match discipline {
            Discipline::Fcfs => self.threshold.unwrap_or(0.0),
            _ => self.required("threshold", self.threshold)?,
        };
        Ok(ScenarioConfig {
            lambda1: self.required("lambda1", self.lambda1)?,
            lambda2: self.required("lambda2", self.lambda2)?,
            mu1: self.required("mu1", self.mu1)?,
            mu2: self.required("mu2", self.mu2)?,
            threshold_t,
            horizon: self.horizon.unwrap_or(DEFAULT_HORIZON),
            master_seed: self.seed.unwrap_or(0),
            discipline,
        })
    }

    fn x_config(&self) -> Result<XConfig> {
        if self.threshold.is_some() {
            return Err(usage("--threshold conflicts with --model x; use --t1/--t2"));
        }
        Ok(XConfig {
            lambda1: self.required("lambda1", self.lambda1)?,
            lambda2: self.required("lambda2", self.lambda2)?,
            mu1: self.required("mu1", self.mu1)?,
            mu2: self.required("mu2", self.mu2)?,
            t1: self.required("t1", self.t1)?,
            t2: self.required("t2", self.t2)?,
            horizon: self.horizon.unwrap_or(DEFAULT_HORIZON),
            master_seed: self.seed.unwrap_or(0),
        })
    }

    fn n_discipline(&self) -> Result<Discipline> {
        match self.model {
            None | Some(Model::Or) => Ok(Discipline::Original),
            Some(Model::Ub) => Ok(Discipline::UpperBound),
            Some(Model::Fcfs) => Ok(Discipline::Fcfs),
            Some(Model::X) => Err(usage("this command runs N-model systems only")),
        }
    }
}

/// What a run does.
#[derive(Debug, Clone, PartialEq)]
pub enum Task {
    Simulate(ScenarioConfig),
    SimulateX(XConfig),
    Couple { config: ScenarioConfig, pair: Pair, negative_control: bool },
    Sweep { grid: Vec<(f64, f64)>, dropped: Vec<(f64, f64)>, thresholds: Vec<Time>, settings: SweepSettings },
    Pasta { config: ScenarioConfig, samples: usize },
    FcfsEquiv { config: ScenarioConfig, replications: usize },
    Replay { script: ScriptedRun, table1: bool },
    XSearch { config: XConfig, seeds: Vec<u64> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub task: Task,
    pub out_dir: PathBuf,
}

/// Expands `start:end:step` into `start + i * step` up to `end`.
pub fn parse_range(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [a, b, step] = parts.as_slice() else {
        return Err(usage(format!("grid '{spec}' is not start:end:step")));
    };
    let (a, b, step): (f64, f64, f64) = (number("grid", a)?, number("grid", b)?, number("grid", step)?);
    if !(step > 0.0) || !(b >= a) {
        return Err(usage(format!("grid '{spec}' needs step > 0 and end >= start")));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| a + i as f64 * step).collect())
}

pub fn parse_list(spec: &str) -> Result<Vec<f64>> {
    spec.split(',').map(|v| number("list", v)).collect()
}

fn script_from(file: &ScenarioFile, t1: Option<f64>, t2: Option<f64>, horizon: Option<f64>) -> Result<ScriptedRun> {
    let last = file
        .arrivals
        .iter()
        .map(|a| a.0)
        .chain(file.z1.iter().copied())
        .chain(file.z2.iter().copied())
        .fold(0.0, f64::max);
    Ok(ScriptedRun {
        arrivals: file.arrivals.clone(),
        z1: file.z1.clone(),
        z2: file.z2.clone(),
        t1: t1.ok_or_else(|| usage("scripted run needs t1"))?,
        t2: t2.ok_or_else(|| usage("scripted run needs t2"))?,
        horizon: horizon.unwrap_or(last + 1.0),
    })
}

fn manifest_from(cli: Cli) -> Result<RunManifest> {
    let (task, out_dir) = match cli.command {
        Command::Simulate(a) => {
            let s = Settings::from_args(&a)?;
            let task = match s.model {
                Some(Model::X) => Task::SimulateX(s.x_config()?),
                _ => Task::Simulate(s.scenario(s.n_discipline()?)?),
            };
            (task, a.out)
        }
        Command::Couple { scenario, pair, negative_control } => {
            let mut s = Settings::from_args(&scenario)?;
            s.pair = s.pair.or(pair);
            if s.model.is_some_and(|m| m != Model::Or) {
                return Err(usage("couple always pairs the original system; --model must be or"));
            }
            let pair = match s.pair.unwrap_or(PairArg::OrUb) {
                PairArg::OrUb => Pair::OrUb,
                PairArg::OrMm1 => Pair::OrMm1,
            };
            if negative_control && pair != Pair::OrUb {
                return Err(usage("--negative-control requires --pair or-ub"));
            }
            (Task::Couple { config: s.scenario(Discipline::Original)?, pair, negative_control }, scenario.out)
        }
        Command::Sweep { scenario, grid, thresholds, min_boundary_distance } => {
            let mut s = Settings::from_args(&scenario)?;
            s.grid = s.grid.or(grid);
            s.thresholds = s.thresholds.or(thresholds);
            s.min_boundary_distance = s.min_boundary_distance.or(min_boundary_distance);
            let mu1 = s.required("mu1", s.mu1)?;
            let mu2 = s.required("mu2", s.mu2)?;
            let axis = parse_range(s.grid.as_deref().ok_or_else(|| usage("missing required --grid"))?)?;
            let thresholds = match (&s.thresholds, s.threshold) {
                (Some(list), _) => parse_list(list)?,
                (None, Some(t)) => vec![t],
                (None, None) => return Err(usage("missing required --thresholds")),
            };
            let min_distance = s.min_boundary_distance.unwrap_or(0.0);
            let (grid, dropped): (Vec<_>, Vec<_>) = axis
                .iter()
                .flat_map(|&l1| axis.iter().map(move |&l2| (l1, l2)))
                .partition(|&(l1, l2)| !on_boundary(l1, l2, mu1, mu2) && boundary_distance(l1, l2, mu1, mu2) >= min_distance);
            let settings = SweepSettings {
                mu1,
                mu2,
                horizon: s.horizon.unwrap_or(DEFAULT_HORIZON),
                replications: s.replications.unwrap_or(3),
                master_seed: s.seed.unwrap_or(0),
                drift: DriftSettings::default(),
            };
            (Task::Sweep { grid, dropped, thresholds, settings }, scenario.out)
        }
        Command::Pasta { scenario, samples } => {
            let mut s = Settings::from_args(&scenario)?;
            s.samples = s.samples.or(samples);
            let config = s.scenario(Discipline::UpperBound)?;
            (Task::Pasta { config, samples: s.samples.unwrap_or(100_000) }, scenario.out)
        }
        Command::FcfsEquiv(a) => {
            let s = Settings::from_args(&a)?;
            let config = s.scenario(Discipline::UpperBound)?;
            (Task::FcfsEquiv { config, replications: s.replications.unwrap_or(20) }, a.out)
        }
        Command::ReplayTable1 { config, out } => {
            let task = match config {
                None => Task::Replay { script: ScriptedRun::table1(), table1: true },
                Some(path) => {
                    let file = load_scenario_file(&path)?;
                    let get = |k: &str| file.values.get(k).map(|v| number::<f64>(k, v)).transpose();
                    let script = script_from(&file, get("t1")?, get("t2")?, get("horizon")?)?;
                    let table1 = script == ScriptedRun::table1();
                    Task::Replay { script, table1 }
                }
            };
            (task, out)
        }
        Command::XSearch { scenario, seeds } => {
            let mut s = Settings::from_args(&scenario)?;
            s.seeds = s.seeds.or(seeds);
            let config = s.x_config()?;
            let first = config.master_seed;
            let seeds = (first..first + s.seeds.unwrap_or(100)).collect();
            (Task::XSearch { config, seeds }, scenario.out)
        }
    };
    Ok(RunManifest { task, out_dir })
}

/// Parses a full argument vector (program name first).
pub fn parse_args<I, T>(argv: I) -> Result<RunManifest>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv).map_err(|e| usage(e.to_string()))?;
    manifest_from(cli)
}

/// Result of executing a manifest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Outcome {
    pub exit_code: i32,
    pub summary: String,
}

fn outcome(ok: bool, summary: String) -> Outcome {
    Outcome { exit_code: if ok { EXIT_OK } else { EXIT_CHECK_FAILED }, summary }
}

pub fn exit_code_for(error: &Error) -> i32 {
    match error {
        Error::Io(_) | Error::Csv(_) | Error::Json(_) => EXIT_IO,
        Error::CorruptedTrace(_) | Error::InvalidEvent(_) => EXIT_CHECK_FAILED,
        _ => EXIT_USAGE,
    }
}

#[derive(Serialize)]
struct RunSummary<'a, C: Serialize> {
    command: &'a str,
    config: &'a C,
    samples: u64,
    violations: usize,
    by_inequality: BTreeMap<Inequality, usize>,
}

fn tally(violations: &[ViolationReport]) -> BTreeMap<Inequality, usize> {
    let mut m = BTreeMap::new();
    for v in violations {
        *m.entry(v.inequality).or_insert(0) += 1;
    }
    m
}

/// The sample with the roles of the two systems exchanged: checking it
/// tests the reversed inequalities.
fn reversed(sample: &TraceSample) -> TraceSample {
    match &sample.companion {
        Companion::UpperBound(ub) => TraceSample {
            time: sample.time,
            event: sample.event,
            or: ub.clone(),
            companion: Companion::UpperBound(sample.or.clone()),
        },
        Companion::LowerBounds(_) => sample.clone(),
    }
}

fn check_sample(sample: &TraceSample, pair: Pair, negative_control: bool) -> Result<Vec<ViolationReport>> {
    let mut v = match (pair, negative_control) {
        (Pair::OrUb, false) => {
            let mut v = dominance_violations(sample)?;
            v.extend(subset_violations(sample)?);
            v
        }
        (Pair::OrUb, true) => {
            let r = reversed(sample);
            let mut v = dominance_violations(&r)?;
            v.extend(subset_violations(&r)?);
            v
        }
        (Pair::OrMm1, _) => lower_bound_violations(sample)?,
    };
    v.extend(service_slack_violations(sample));
    Ok(v)
}

fn run_couple(config: &ScenarioConfig, pair: Pair, negative_control: bool, out: &Path) -> Result<Outcome> {
    let mut trace = CoupledTraceWriter::new(create(&out.join("trace.csv"))?, pair)?;
    let mut violations = Vec::new();
    let mut samples = 0u64;
    let mut failure = None;
    run_coupled_with(config, pair, |sample| {
        samples += 1;
        let step = trace.write(sample).and_then(|_| check_sample(sample, pair, negative_control));
        match step {
            Ok(v) => {
                violations.extend(v);
                ControlFlow::Continue(())
            }
            Err(e) => {
                failure = Some(e);
                ControlFlow::Break(())
            }
        }
    })?;
    if let Some(e) = failure {
        return Err(e);
    }
    trace.finish()?;
    write_violations_jsonl(create(&out.join("violations.jsonl"))?, &violations)?;
    let command = if negative_control { "couple-negative-control" } else { "couple" };
    write_json(
        create(&out.join("summary.json"))?,
        &RunSummary { command, config, samples, violations: violations.len(), by_inequality: tally(&violations) },
    )?;
    Ok(outcome(
        violations.is_empty(),
        format!("{command}: {samples} samples, {} violations", violations.len()),
    ))
}

fn run_simulate(config: &ScenarioConfig, out: &Path) -> Result<Outcome> {
    config.validate()?;
    let streams = crate::events::build_coupled_streams(config)?;
    simulate_into(&streams, config.initial_state()?, out, config)
}

fn simulate_into<C: Serialize>(streams: &EventStreamSet, state: SystemState, out: &Path, config: &C) -> Result<Outcome> {
    let mut trace = SystemTraceWriter::new(create(&out.join("trace.csv"))?)?;
    let mut samples = 0u64;
    let last = Simulation::new(streams, state).run(|event, state| {
        samples += 1;
        trace.write(event.map_or(0.0, |e| e.time), event.map(|e| e.kind), &state.counters())
    })?;
    trace.finish()?;
    #[derive(Serialize)]
    struct SimSummary<'a, C: Serialize> {
        command: &'a str,
        config: &'a C,
        samples: u64,
        jobs_admitted: u64,
        final_counters: crate::dynamics::Counters,
    }
    let final_counters = last.counters();
    write_json(
        create(&out.join("summary.json"))?,
        &SimSummary { command: "simulate", config, samples, jobs_admitted: last.jobs_admitted(), final_counters },
    )?;
    Ok(outcome(
        true,
        format!("simulate: {samples} samples, {} jobs, {} waiting at the horizon", last.jobs_admitted(), final_counters.waiting()),
    ))
}

/// Runs a manifest, writing its artifacts into `out_dir`.
pub fn execute(manifest: &RunManifest) -> Result<Outcome> {
    let out = manifest.out_dir.as_path();
    fs::create_dir_all(out)?;
    match &manifest.task {
        Task::Simulate(config) => run_simulate(config, out),
        Task::SimulateX(config) => {
            config.validate()?;
            let streams = EventStreamSet::generate(config.rates(), config.horizon, config.master_seed)?;
            simulate_into(&streams, SystemState::x_model(Discipline::Original, config.t1, config.t2)?, out, config)
        }
        Task::Couple { config, pair, negative_control } => run_couple(config, *pair, *negative_control, out),
        Task::Sweep { grid, dropped, thresholds, settings } => {
            let points = sweep_region(grid, thresholds, settings)?;
            write_sweep_csv(create(&out.join("sweep.csv"))?, &points)?;
            let agreement = summarize_sweep(&points);
            #[derive(Serialize)]
            struct SweepSummary<'a> {
                command: &'a str,
                mu1: f64,
                mu2: f64,
                horizon: f64,
                replications: usize,
                master_seed: u64,
                thresholds: &'a [Time],
                dropped_points: &'a [(f64, f64)],
                agreement: crate::stability::SweepAgreement,
            }
            write_json(
                create(&out.join("summary.json"))?,
                &SweepSummary {
                    command: "sweep",
                    mu1: settings.mu1,
                    mu2: settings.mu2,
                    horizon: settings.horizon,
                    replications: settings.replications,
                    master_seed: settings.master_seed,
                    thresholds,
                    dropped_points: dropped,
                    agreement,
                },
            )?;
            let note = if dropped.is_empty() { String::new() } else { format!(" ({} boundary points dropped)", dropped.len()) };
            Ok(outcome(
                agreement.theory_agreement >= 0.95,
                format!(
                    "sweep: {} points{note}, theory agreement {:.3}, threshold invariance {:.3}",
                    agreement.points, agreement.theory_agreement, agreement.threshold_invariance
                ),
            ))
        }
        Task::Pasta { config, samples } => {
            let summary = pasta_check(config, *samples)?;
            write_json(create(&out.join("pasta.json"))?, &summary)?;
            Ok(outcome(
                summary.passes(),
                format!(
                    "pasta: mean {:.4} (target {:.4}, se {:.4}), dispersion {:.4}, p = {:.4}",
                    summary.mean, summary.theoretical_mean, summary.std_error, summary.dispersion, summary.p_value
                ),
            ))
        }
        Task::FcfsEquiv { config, replications } => {
            let result = fcfs_equivalence_check(config, *replications)?;
            write_json(create(&out.join("fcfs_equivalence.json"))?, &result)?;
            Ok(outcome(
                result.overlap,
                format!(
                    "fcfs-equiv: UB {:.4} +- {:.4}, FCFS {:.4} +- {:.4}, overlap {}",
                    result.upper_bound.mean, result.upper_bound.half_width, result.fcfs.mean, result.fcfs.half_width, result.overlap
                ),
            ))
        }
        Task::Replay { script, table1 } => {
            let report = replay_script(script)?;
            let mut trace = CoupledTraceWriter::new(create(&out.join("trace.csv"))?, Pair::OrUb)?;
            for s in &report.trace {
                trace.write(s)?;
            }
            trace.finish()?;
            write_job_records_csv(create(&out.join("jobs.csv"))?, &report.or_records, &report.ub_records)?;
            write_violations_jsonl(create(&out.join("violations.jsonl"))?, &report.violations)?;
            let summary = ReplaySummary::new(&report, *table1);
            write_json(create(&out.join("replay.json"))?, &summary)?;
            let ok = if *table1 { summary.matches_table1 } else { report.violations.is_empty() };
            Ok(outcome(
                ok,
                format!(
                    "replay: {} ({} violation samples, Q2 intervals {:?})",
                    summary.status,
                    report.violations.len(),
                    report.q2_violation_intervals
                ),
            ))
        }
        Task::XSearch { config, seeds } => {
            let results = search_violations(config, seeds)?;
            let hits: Vec<_> = results.iter().filter(|r| r.violation.is_some()).copied().collect();
            write_jsonl(create(&out.join("violations.jsonl"))?, &hits)?;
            #[derive(Serialize)]
            struct SearchSummary<'a> {
                command: &'a str,
                config: &'a XConfig,
                seeds: usize,
                seeds_with_violation: usize,
            }
            write_json(
                create(&out.join("summary.json"))?,
                &SearchSummary { command: "x-search", config, seeds: seeds.len(), seeds_with_violation: hits.len() },
            )?;
            Ok(outcome(true, format!("x-search: {} of {} seeds show a dominance violation", hits.len(), seeds.len())))
        }
    }
}

/// Entry point used by the binary: parses, executes, prints, and returns the
/// process exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = manifest_from(cli).and_then(|m| execute(&m));
    match result {
        Ok(o) => {
            println!("{}", o.summary);
            o.exit_code
        }
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}
