//! Coupled runs and the pathwise dominance checks.
//!
//! A coupled pair reads one [`EventStreamSet`]: both systems see the same
//! arrivals (hence the same job ids) and the same potential completions. After
//! every event a [`TraceSample`] is produced; the checkers are pure functions
//! of those samples.
//!
//! Each sample is taken after an event has been applied to both systems, so
//! the sample sequence holds the state at every event time `u` and, through
//! its predecessor, the state at `u-`.

use std::collections::VecDeque;
use std::ops::ControlFlow;

use serde::Serialize;

use crate::dynamics::{Counters, Discipline, Job, JobType, Phase, ScenarioConfig, Simulation, StepOutcome, SystemState};
use crate::error::{Error, Result};
use crate::events::{build_coupled_streams, Event, EventCursor, EventKind, EventStreamSet, Time};

/// Job ids of one queue, as per-type arrival positions.
///
/// FCFS within a type keeps every queue a contiguous run of arrivals, so the
/// range form is the common case and makes snapshots O(1).
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum JobSet {
    Range { start: u64, end: u64 },
    Listed(Vec<u64>),
}

impl JobSet {
    pub fn empty() -> Self {
        JobSet::Range { start: 0, end: 0 }
    }

    /// Builds the set from arrival-ordered queues, in order.
    pub fn from_queues(parts: &[&VecDeque<Job>]) -> Self {
        let parts: Vec<&VecDeque<Job>> = parts.iter().copied().filter(|q| !q.is_empty()).collect();
        let (Some(first), Some(last)) = (parts.first(), parts.last()) else {
            return JobSet::empty();
        };
        let contiguous = parts.iter().all(|q| {
            let (f, b) = (q.front().unwrap().type_seq, q.back().unwrap().type_seq);
            b - f + 1 == q.len() as u64
        }) && parts
            .windows(2)
            .all(|w| w[0].back().unwrap().type_seq + 1 == w[1].front().unwrap().type_seq);
        if contiguous {
            JobSet::Range { start: first.front().unwrap().type_seq, end: last.back().unwrap().type_seq + 1 }
        } else {
            let mut ids: Vec<u64> = parts.iter().flat_map(|q| q.iter().map(|j| j.type_seq)).collect();
            ids.sort_unstable();
            JobSet::Listed(ids)
        }
    }

    pub fn from_ids(mut ids: Vec<u64>) -> Self {
        ids.sort_unstable();
        ids.dedup();
        JobSet::Listed(ids)
    }

    pub fn len(&self) -> u64 {
        match self {
            JobSet::Range { start, end } => end - start,
            JobSet::Listed(ids) => ids.len() as u64,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn to_vec(&self) -> Vec<u64> {
        match self {
            JobSet::Range { start, end } => (*start..*end).collect(),
            JobSet::Listed(ids) => ids.clone(),
        }
    }

    pub fn contains(&self, id: u64) -> bool {
        match self {
            JobSet::Range { start, end } => (*start..*end).contains(&id),
            JobSet::Listed(ids) => ids.binary_search(&id).is_ok(),
        }
    }

    /// Number of elements of `self` absent from `other`.
    pub fn missing_from(&self, other: &JobSet) -> u64 {
        match (self, other) {
            (JobSet::Range { start: a, end: b }, JobSet::Range { start: c, end: d }) => {
                let overlap = (*b).min(*d).saturating_sub((*a).max(*c));
                (b - a) - overlap
            }
            _ => self.to_vec().into_iter().filter(|&id| !other.contains(id)).count() as u64,
        }
    }

    pub fn is_subset_of(&self, other: &JobSet) -> bool {
        self.missing_from(other) == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueueSets {
    pub q1_minus: JobSet,
    pub q1_plus: JobSet,
    pub q2: JobSet,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemSnapshot {
    pub counters: Counters,
    pub sets: QueueSets,
}

pub fn snapshot(state: &SystemState) -> SystemSnapshot {
    SystemSnapshot {
        counters: state.counters(),
        sets: QueueSets {
            q1_minus: JobSet::from_queues(&[state.queue(JobType::One, Phase::Young)]),
            q1_plus: JobSet::from_queues(&[state.queue(JobType::One, Phase::Aged)]),
            q2: JobSet::from_queues(&[state.queue(JobType::Two, Phase::Aged), state.queue(JobType::Two, Phase::Young)]),
        },
    }
}

/// The M/M/1 bounding queues `N2` (driven by `A2, Z2`) and `N` (driven by
/// `A1 + A2, Z1 + Z2`).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LowerBounds {
    pub n2: u64,
    pub n: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Companion {
    UpperBound(SystemSnapshot),
    LowerBounds(LowerBounds),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub time: Time,
    /// `None` for the initial empty-system sample.
    pub event: Option<EventKind>,
    pub or: SystemSnapshot,
    pub companion: Companion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Mm1State {
    pub n_jobs: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mm1Event {
    Arrival,
    PotentialCompletion,
}

pub fn mm1_step(state: Mm1State, event: Mm1Event) -> Mm1State {
    match event {
        Mm1Event::Arrival => Mm1State { n_jobs: state.n_jobs + 1 },
        Mm1Event::PotentialCompletion => Mm1State { n_jobs: state.n_jobs.saturating_sub(1) },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pair {
    /// Original system against the upper-bound system.
    OrUb,
    /// Original system against its two M/M/1 lower bounds.
    OrMm1,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledStep {
    pub event: Event,
    pub or: StepOutcome,
    pub ub: StepOutcome,
}

/// Two systems driven by one event cursor.
#[derive(Debug, Clone)]
pub struct CoupledSystems<'s> {
    cursor: EventCursor<'s>,
    or: SystemState,
    ub: SystemState,
}

impl<'s> CoupledSystems<'s> {
    pub fn new(streams: &'s EventStreamSet, or: SystemState, ub: SystemState) -> Result<Self> {
        if or.topology() != ub.topology()
            || [JobType::One, JobType::Two].iter().any(|&k| or.threshold(k).to_bits() != ub.threshold(k).to_bits())
        {
            return Err(Error::InvalidInput("coupled systems must share topology and thresholds".into()));
        }
        Ok(CoupledSystems { cursor: EventCursor::new(streams), or, ub })
    }

    pub fn or(&self) -> &SystemState {
        &self.or
    }

    pub fn ub(&self) -> &SystemState {
        &self.ub
    }

    pub fn advance(&mut self) -> Result<Option<CoupledStep>> {
        let Some(event) = self.cursor.next_event() else {
            return Ok(None);
        };
        let or = self.or.apply(&event)?;
        let ub = self.ub.apply(&event)?;
        match (or.admitted, ub.admitted) {
            (None, None) => {}
            (Some(a), Some(b)) if a.id == b.id && a.eligible_at.to_bits() == b.eligible_at.to_bits() => {
                if a.needs_expiry() {
                    self.cursor.schedule_expiry(a.eligible_at, a.id);
                }
            }
            _ => return Err(Error::CorruptedTrace(format!("coupled systems disagree on the arrival at {}", event.time))),
        }
        Ok(Some(CoupledStep { event, or, ub }))
    }

    pub fn sample(&self, event: Option<EventKind>) -> TraceSample {
        TraceSample {
            time: self.cursor.clock().now,
            event,
            or: snapshot(&self.or),
            companion: Companion::UpperBound(snapshot(&self.ub)),
        }
    }

    /// Runs to the horizon, handing every sample to `sink` until it breaks.
    pub fn run(mut self, mut sink: impl FnMut(&TraceSample) -> ControlFlow<()>) -> Result<Self> {
        if sink(&self.sample(None)).is_break() {
            return Ok(self);
        }
        while let Some(step) = self.advance()? {
            if sink(&self.sample(Some(step.event.kind))).is_break() {
                break;
            }
        }
        Ok(self)
    }
}

fn or_ub_states(config: &ScenarioConfig) -> Result<(SystemState, SystemState)> {
    Ok((
        config.with_discipline(Discipline::Original).initial_state()?,
        config.with_discipline(Discipline::UpperBound).initial_state()?,
    ))
}

fn validate_coupled(config: &ScenarioConfig) -> Result<()> {
    config.with_discipline(Discipline::Original).validate()
}

/// Streams the samples of a coupled run into `sink`.
pub fn run_coupled_with(
    config: &ScenarioConfig,
    pair: Pair,
    mut sink: impl FnMut(&TraceSample) -> ControlFlow<()>,
) -> Result<()> {
    validate_coupled(config)?;
    let streams = build_coupled_streams(config)?;
    match pair {
        Pair::OrUb => {
            let (or, ub) = or_ub_states(config)?;
            CoupledSystems::new(&streams, or, ub)?.run(sink)?;
        }
        Pair::OrMm1 => {
            let or = config.with_discipline(Discipline::Original).initial_state()?;
            let mut bounds = (Mm1State::default(), Mm1State::default());
            let mut stop = false;
            Simulation::new(&streams, or).run(|event, state| {
                if stop {
                    return Ok(());
                }
                if let Some(event) = event {
                    let (n2, n) = &mut bounds;
                    match event.kind {
                        EventKind::Arrival1 => *n = mm1_step(*n, Mm1Event::Arrival),
                        EventKind::Arrival2 => {
                            *n2 = mm1_step(*n2, Mm1Event::Arrival);
                            *n = mm1_step(*n, Mm1Event::Arrival);
                        }
                        EventKind::PotentialCompletion1 => *n = mm1_step(*n, Mm1Event::PotentialCompletion),
                        EventKind::PotentialCompletion2 => {
                            *n2 = mm1_step(*n2, Mm1Event::PotentialCompletion);
                            *n = mm1_step(*n, Mm1Event::PotentialCompletion);
                        }
                        EventKind::ThresholdExpiry(_) => {}
                    }
                }
                let sample = TraceSample {
                    time: event.map_or(0.0, |e| e.time),
                    event: event.map(|e| e.kind),
                    or: snapshot(state),
                    companion: Companion::LowerBounds(LowerBounds { n2: bounds.0.n_jobs, n: bounds.1.n_jobs }),
                };
                stop = sink(&sample).is_break();
                Ok(())
            })?;
        }
    }
    Ok(())
}

/// Materialized trace of a coupled run.
pub fn run_coupled(config: &ScenarioConfig, pair: Pair) -> Result<Vec<TraceSample>> {
    let mut trace = Vec::new();
    run_coupled_with(config, pair, |s| {
        trace.push(s.clone());
        ControlFlow::Continue(())
    })?;
    Ok(trace)
}

/// OR and UB systems on independent stream sets: a negative control for the
/// checkers. Samples are merged in time order.
pub fn run_decoupled(config: &ScenarioConfig, or_seed: u64, ub_seed: u64) -> Result<Vec<TraceSample>> {
    validate_coupled(config)?;
    let (or, ub) = or_ub_states(config)?;
    let record = |state: SystemState, seed: u64| -> Result<Vec<(Time, Option<EventKind>, SystemSnapshot)>> {
        let streams = build_coupled_streams(&config.with_seed(seed))?;
        let mut out = Vec::new();
        Simulation::new(&streams, state).run(|event, s| {
            out.push((event.map_or(0.0, |e| e.time), event.map(|e| e.kind), snapshot(s)));
            Ok(())
        })?;
        Ok(out)
    };
    let or_path = record(or, or_seed)?;
    let ub_path = record(ub, ub_seed)?;
    let (mut i, mut j) = (1, 1);
    let mut or_now = or_path[0].2.clone();
    let mut ub_now = ub_path[0].2.clone();
    let mut trace = vec![TraceSample {
        time: 0.0,
        event: None,
        or: or_now.clone(),
        companion: Companion::UpperBound(ub_now.clone()),
    }];
    while i < or_path.len() || j < ub_path.len() {
        let take_or = j >= ub_path.len() || (i < or_path.len() && or_path[i].0 <= ub_path[j].0);
        let (time, event) = if take_or {
            or_now = or_path[i].2.clone();
            i += 1;
            (or_path[i - 1].0, or_path[i - 1].1)
        } else {
            ub_now = ub_path[j].2.clone();
            j += 1;
            (ub_path[j - 1].0, ub_path[j - 1].1)
        };
        trace.push(TraceSample { time, event, or: or_now.clone(), companion: Companion::UpperBound(ub_now.clone()) });
    }
    Ok(trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub enum Inequality {
    #[serde(rename = "Q1MINUS")]
    Q1Minus,
    #[serde(rename = "Q1PLUS")]
    Q1Plus,
    #[serde(rename = "Q2")]
    Q2,
    #[serde(rename = "CUST1")]
    Cust1,
    #[serde(rename = "SERV2")]
    Serv2,
    #[serde(rename = "SUBSET1M")]
    Subset1Minus,
    #[serde(rename = "SUBSET1P")]
    Subset1Plus,
    #[serde(rename = "SUBSET2")]
    Subset2,
    #[serde(rename = "LB_N2")]
    LowerBoundN2,
    #[serde(rename = "LB_N")]
    LowerBoundN,
    /// `Q1 + Q2 <= total in system <= Q1 + Q2 + 2`.
    #[serde(rename = "SLACK")]
    ServiceSlack,
}

/// A violated inequality `lhs <= rhs` at one sample.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ViolationReport {
    pub time: Time,
    pub inequality: Inequality,
    pub lhs: u64,
    pub rhs: u64,
    pub event_kind: Option<EventKind>,
}

fn report(sample: &TraceSample, inequality: Inequality, lhs: u64, rhs: u64) -> Option<ViolationReport> {
    (lhs > rhs).then_some(ViolationReport { time: sample.time, inequality, lhs, rhs, event_kind: sample.event })
}

fn upper_bound(sample: &TraceSample) -> Result<&SystemSnapshot> {
    match &sample.companion {
        Companion::UpperBound(ub) => Ok(ub),
        Companion::LowerBounds(_) => Err(Error::InvalidInput("sample is not from an OR/UB coupled run".into())),
    }
}

/// Counter inequalities between the OR and UB systems at one sample.
pub fn dominance_violations(sample: &TraceSample) -> Result<Vec<ViolationReport>> {
    let ub = upper_bound(sample)?.counters;
    let or = sample.or.counters;
    Ok([
        report(sample, Inequality::Q1Minus, or.q1_minus, ub.q1_minus),
        report(sample, Inequality::Q1Plus, or.q1_plus, ub.q1_plus),
        report(sample, Inequality::Q2, or.q2, ub.q2),
        report(sample, Inequality::Cust1, or.q1() + or.r1, ub.q1() + ub.r1),
        report(sample, Inequality::Serv2, or.r2 + or.r3, ub.r2 + ub.r3),
    ]
    .into_iter()
    .flatten()
    .collect())
}

/// Waiting-set inclusions between the OR and UB systems at one sample.
/// `lhs` counts OR jobs missing from the UB set.
pub fn subset_violations(sample: &TraceSample) -> Result<Vec<ViolationReport>> {
    let ub = &upper_bound(sample)?.sets;
    let or = &sample.or.sets;
    Ok([
        report(sample, Inequality::Subset1Minus, or.q1_minus.missing_from(&ub.q1_minus), 0),
        report(sample, Inequality::Subset1Plus, or.q1_plus.missing_from(&ub.q1_plus), 0),
        report(sample, Inequality::Subset2, or.q2.missing_from(&ub.q2), 0),
    ]
    .into_iter()
    .flatten()
    .collect())
}

/// `N2 <= total in system`, `N <= total in system` at one sample.
pub fn lower_bound_violations(sample: &TraceSample) -> Result<Vec<ViolationReport>> {
    let Companion::LowerBounds(bounds) = sample.companion else {
        return Err(Error::InvalidInput("sample is not from an OR/M/M/1 coupled run".into()));
    };
    let total = sample.or.counters.total_in_system();
    Ok([
        report(sample, Inequality::LowerBoundN2, bounds.n2, total),
        report(sample, Inequality::LowerBoundN, bounds.n, total),
    ]
    .into_iter()
    .flatten()
    .collect())
}

/// At most two jobs are in service: checked for the OR system and, when
/// present, the UB system.
pub fn service_slack_violations(sample: &TraceSample) -> Vec<ViolationReport> {
    let mut out = Vec::new();
    let mut check = |c: &Counters| {
        let (waiting, total) = (c.waiting(), c.total_in_system());
        out.extend(report(sample, Inequality::ServiceSlack, waiting, total));
        out.extend(report(sample, Inequality::ServiceSlack, total, waiting + 2));
    };
    check(&sample.or.counters);
    if let Companion::UpperBound(ub) = &sample.companion {
        check(&ub.counters);
    }
    out
}

fn collect<'a>(
    trace: impl IntoIterator<Item = &'a TraceSample>,
    check: impl Fn(&TraceSample) -> Result<Vec<ViolationReport>>,
) -> Result<Vec<ViolationReport>> {
    let mut out = Vec::new();
    for sample in trace {
        out.extend(check(sample)?);
    }
    Ok(out)
}

pub fn check_dominance<'a>(trace: impl IntoIterator<Item = &'a TraceSample>) -> Result<Vec<ViolationReport>> {
    collect(trace, dominance_violations)
}

pub fn check_subsets<'a>(trace: impl IntoIterator<Item = &'a TraceSample>) -> Result<Vec<ViolationReport>> {
    collect(trace, subset_violations)
}

pub fn check_lower_bounds<'a>(trace: impl IntoIterator<Item = &'a TraceSample>) -> Result<Vec<ViolationReport>> {
    collect(trace, lower_bound_violations)
}

pub fn check_service_slack<'a>(trace: impl IntoIterator<Item = &'a TraceSample>) -> Vec<ViolationReport> {
    trace.into_iter().flat_map(service_slack_violations).collect()
}

/// Per-sample outcome counts of a streamed coupled run.
#[derive(Debug, Clone, Default)]
pub struct StreamedCheck {
    pub samples: u64,
    pub violations: Vec<ViolationReport>,
}

/// Runs a coupled pair and checks every applicable inequality on the fly,
/// in constant memory apart from the violations themselves.
pub fn run_and_check(config: &ScenarioConfig, pair: Pair) -> Result<StreamedCheck> {
    let mut result = StreamedCheck::default();
    let mut failure = None;
    run_coupled_with(config, pair, |sample| {
        result.samples += 1;
        let checked = match pair {
            Pair::OrUb => dominance_violations(sample).and_then(|mut v| {
                v.extend(subset_violations(sample)?);
                Ok(v)
            }),
            Pair::OrMm1 => lower_bound_violations(sample),
        };
        match checked {
            Ok(v) => {
                result.violations.extend(v);
                result.violations.extend(service_slack_violations(sample));
                ControlFlow::Continue(())
            }
            Err(e) => {
                failure = Some(e);
                ControlFlow::Break(())
            }
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(result),
    }
}

/// Keeps only the last sample at each time stamp: the state once every
/// simultaneous event has been processed.
pub fn collapse_by_time(trace: &[TraceSample]) -> Vec<&TraceSample> {
    let mut out: Vec<&TraceSample> = Vec::with_capacity(trace.len());
    for sample in trace {
        match out.last_mut() {
            Some(last) if last.time == sample.time => *last = sample,
            _ => out.push(sample),
        }
    }
    out
}

/// Maximal half-open intervals `[start, end)` on which `holds` is true for
/// the time-collapsed trace. An interval still open at the end runs to `horizon`.
pub fn intervals_where(trace: &[TraceSample], horizon: Time, holds: impl Fn(&TraceSample) -> bool) -> Vec<(Time, Time)> {
    let mut out = Vec::new();
    let mut open: Option<Time> = None;
    for sample in collapse_by_time(trace) {
        match (open, holds(sample)) {
            (None, true) => open = Some(sample.time),
            (Some(start), false) => {
                out.push((start, sample.time));
                open = None;
            }
            _ => {}
        }
    }
    if let Some(start) = open {
        out.push((start, horizon));
    }
    out
}
