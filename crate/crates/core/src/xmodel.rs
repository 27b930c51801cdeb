//! The X-model: both servers serve both types, with a threshold on each
//! diagonal. Scripted replays and a randomized search for sample paths on
//! which the OR system is not dominated by its UB analog.

use std::collections::BTreeMap;
use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coupling::{
    check_dominance, dominance_violations, intervals_where, Companion, CoupledSystems, Inequality, TraceSample,
    ViolationReport,
};
use crate::dynamics::{Discipline, JobType, ServerId, SystemState, Topology};
use crate::error::{Error, Result};
use crate::events::{Event, EventStreamSet, JobId, Rates, Time};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct XConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu1: f64,
    pub mu2: f64,
    /// Age at which a type-1 job becomes eligible at server 2.
    pub t1: Time,
    /// Age at which a type-2 job becomes eligible at server 1.
    pub t2: Time,
    pub horizon: Time,
    pub master_seed: u64,
}

impl XConfig {
    pub fn rates(&self) -> Rates {
        Rates { lambda1: self.lambda1, lambda2: self.lambda2, mu1: self.mu1, mu2: self.mu2 }
    }

    pub fn validate(&self) -> Result<()> {
        self.rates().validate()?;
        for (name, t) in [("t1", self.t1), ("t2", self.t2)] {
            if !(t >= 0.0 && t.is_finite()) {
                return Err(Error::param(format!("{name} must be finite and non-negative, got {t}")));
            }
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::param(format!("horizon must be positive and finite, got {}", self.horizon)));
        }
        Ok(())
    }

    pub fn with_seed(self, master_seed: u64) -> Self {
        XConfig { master_seed, ..self }
    }
}

/// Explicit arrivals and potential completions in place of sampled streams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptedRun {
    pub arrivals: Vec<(Time, JobType)>,
    pub z1: Vec<Time>,
    pub z2: Vec<Time>,
    pub t1: Time,
    pub t2: Time,
    pub horizon: Time,
}

impl ScriptedRun {
    pub fn streams(&self) -> Result<EventStreamSet> {
        if self.arrivals.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::param("arrival times must be strictly increasing"));
        }
        let of_type = |k: JobType| self.arrivals.iter().filter(|a| a.1 == k).map(|a| a.0).collect::<Vec<_>>();
        EventStreamSet::from_jumps(of_type(JobType::One), of_type(JobType::Two), self.z1.clone(), self.z2.clone(), self.horizon)
    }

    pub fn table1() -> Self {
        ScriptedRun {
            arrivals: vec![(0.0, JobType::One), (1.0, JobType::Two), (2.0, JobType::Two)],
            z1: vec![10.0],
            z2: vec![5.0, 6.0],
            t1: 5.0,
            t2: 1.0,
            horizon: 12.0,
        }
    }
}

fn x_apply(state: SystemState, event: &Event, discipline: Discipline) -> Result<SystemState> {
    if state.topology() != Topology::X || state.discipline() != discipline {
        return Err(Error::InvalidInput(format!(
            "expected an X-model {discipline} state, got {:?} {}",
            state.topology(),
            state.discipline()
        )));
    }
    let mut state = state;
    state.apply(event)?;
    Ok(state)
}

/// One event of the X-model OR system.
pub fn x_step(state: SystemState, event: &Event) -> Result<SystemState> {
    x_apply(state, event, Discipline::Original)
}

/// One event of the X-model UB system.
pub fn x_ub_step(state: SystemState, event: &Event) -> Result<SystemState> {
    x_apply(state, event, Discipline::UpperBound)
}

/// Inequalities checked on X-model pairs. The UB analog delays type 2 at its
/// own server as well, so the server-occupancy comparisons have no X analog;
/// only the queue lengths are compared.
pub const X_INEQUALITIES: [Inequality; 3] = [Inequality::Q1Minus, Inequality::Q1Plus, Inequality::Q2];

fn queue_only(reports: Vec<ViolationReport>) -> Vec<ViolationReport> {
    reports.into_iter().filter(|r| X_INEQUALITIES.contains(&r.inequality)).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct JobRecord {
    pub id: JobId,
    pub job_type: JobType,
    pub arrival: Time,
    pub start: Option<Time>,
    pub server: Option<ServerId>,
    pub departure: Option<Time>,
}

#[derive(Debug, Clone)]
pub struct ReplayReport {
    pub or_records: Vec<JobRecord>,
    pub ub_records: Vec<JobRecord>,
    pub trace: Vec<TraceSample>,
    pub violations: Vec<ViolationReport>,
    /// Intervals on which the OR type-2 queue exceeds the UB one.
    pub q2_violation_intervals: Vec<(Time, Time)>,
    pub horizon: Time,
}

/// `(start, server, departure)` of jobs 1 to 3 in the OR system of the built-in counterexample.
pub const TABLE1_OR: [(Time, ServerId, Time); 3] =
    [(0.0, ServerId::One, 10.0), (1.0, ServerId::Two, 5.0), (5.0, ServerId::Two, 6.0)];
/// The same for the UB system.
pub const TABLE1_UB: [(Time, ServerId, Time); 3] =
    [(5.0, ServerId::Two, 6.0), (2.0, ServerId::Two, 5.0), (3.0, ServerId::One, 10.0)];

fn matches(records: &[JobRecord], expected: &[(Time, ServerId, Time)]) -> bool {
    records.len() == expected.len()
        && records.iter().zip(expected).all(|(r, &(start, server, departure))| {
            r.start.map(f64::to_bits) == Some(start.to_bits())
                && r.server == Some(server)
                && r.departure.map(f64::to_bits) == Some(departure.to_bits())
        })
}

impl ReplayReport {
    /// Bit-exact agreement with the records and the expected Q2 interval.
    pub fn matches_table1(&self) -> bool {
        matches(&self.or_records, &TABLE1_OR)
            && matches(&self.ub_records, &TABLE1_UB)
            && self.q2_violation_intervals == [(3.0, 5.0)]
    }
}

#[derive(Default)]
struct Recorder {
    jobs: BTreeMap<u64, JobRecord>,
}

impl Recorder {
    fn note(&mut self, time: Time, outcome: &crate::dynamics::StepOutcome) {
        if let Some(job) = outcome.admitted {
            self.jobs.insert(
                job.id.0,
                JobRecord { id: job.id, job_type: job.job_type, arrival: job.arrival_time, start: None, server: None, departure: None },
            );
        }
        if let Some((job, _)) = outcome.departed {
            if let Some(r) = self.jobs.get_mut(&job.id.0) {
                r.departure = Some(time);
            }
        }
        if let Some((job, server)) = outcome.started {
            if let Some(r) = self.jobs.get_mut(&job.id.0) {
                r.start = Some(time);
                r.server = Some(server);
            }
        }
    }

    fn finish(self) -> Vec<JobRecord> {
        self.jobs.into_values().collect()
    }
}

/// Runs the OR and UB X-models through a script, recording every job.
pub fn replay_script(script: &ScriptedRun) -> Result<ReplayReport> {
    let streams = script.streams()?;
    let or = SystemState::x_model(Discipline::Original, script.t1, script.t2)?;
    let ub = SystemState::x_model(Discipline::UpperBound, script.t1, script.t2)?;
    let mut coupled = CoupledSystems::new(&streams, or, ub)?;
    let (mut or_rec, mut ub_rec) = (Recorder::default(), Recorder::default());
    let mut trace = vec![coupled.sample(None)];
    while let Some(step) = coupled.advance()? {
        or_rec.note(step.event.time, &step.or);
        ub_rec.note(step.event.time, &step.ub);
        trace.push(coupled.sample(Some(step.event.kind)));
    }
    let violations = queue_only(check_dominance(&trace)?);
    let q2_violation_intervals = intervals_where(&trace, script.horizon, |s| match &s.companion {
        Companion::UpperBound(ub) => s.or.counters.q2 > ub.counters.q2,
        Companion::LowerBounds(_) => false,
    });
    Ok(ReplayReport {
        or_records: or_rec.finish(),
        ub_records: ub_rec.finish(),
        trace,
        violations,
        q2_violation_intervals,
        horizon: script.horizon,
    })
}

pub fn replay_table1() -> Result<ReplayReport> {
    replay_script(&ScriptedRun::table1())
}

/// Runs a coupled X pair until the first dominance violation and returns it
/// with the trace recorded up to that point.
fn first_violation(streams: &EventStreamSet, t1: Time, t2: Time) -> Result<(Option<ViolationReport>, Vec<TraceSample>)> {
    let or = SystemState::x_model(Discipline::Original, t1, t2)?;
    let ub = SystemState::x_model(Discipline::UpperBound, t1, t2)?;
    let mut trace = Vec::new();
    let mut found = None;
    let mut failure = None;
    CoupledSystems::new(streams, or, ub)?.run(|sample| {
        trace.push(sample.clone());
        match dominance_violations(sample).map(queue_only) {
            Ok(v) if v.is_empty() => ControlFlow::Continue(()),
            Ok(v) => {
                found = Some(v[0]);
                ControlFlow::Break(())
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
    Ok((found, trace))
}

fn confirmed(found: Option<ViolationReport>, trace: &[TraceSample]) -> Result<Option<ViolationReport>> {
    let Some(v) = found else {
        return Ok(None);
    };
    let rechecked = queue_only(check_dominance(trace)?);
    if rechecked.first() != Some(&v) {
        return Err(Error::CorruptedTrace(format!("violation at {} not reproduced by the trace checker", v.time)));
    }
    Ok(Some(v))
}

/// Earliest dominance violation of a scripted run, if any.
pub fn search_script(script: &ScriptedRun) -> Result<Option<ViolationReport>> {
    let (found, trace) = first_violation(&script.streams()?, script.t1, script.t2)?;
    confirmed(found, &trace)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SeedOutcome {
    pub seed: u64,
    pub violation: Option<ViolationReport>,
}

/// Earliest dominance violation per seed. Each one is confirmed by re-running
/// the trace checker on the recorded trace.
pub fn search_violations(config: &XConfig, seeds: &[u64]) -> Result<Vec<SeedOutcome>> {
    config.validate()?;
    seeds
        .par_iter()
        .map(|&seed| {
            let streams = EventStreamSet::generate(config.rates(), config.horizon, seed)?;
            let (found, trace) = first_violation(&streams, config.t1, config.t2)?;
            Ok(SeedOutcome { seed, violation: confirmed(found, &trace)? })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{EventCursor, EventKind};

    #[test]
    fn scripted_records() {
        let r = replay_table1().unwrap();
        let starts: Vec<_> = r.or_records.iter().map(|j| (j.start, j.server, j.departure)).collect();
        assert_eq!(
            starts,
            vec![
                (Some(0.0), Some(ServerId::One), Some(10.0)),
                (Some(1.0), Some(ServerId::Two), Some(5.0)),
                (Some(5.0), Some(ServerId::Two), Some(6.0)),
            ]
        );
        let starts: Vec<_> = r.ub_records.iter().map(|j| (j.start, j.server, j.departure)).collect();
        assert_eq!(
            starts,
            vec![
                (Some(5.0), Some(ServerId::Two), Some(6.0)),
                (Some(2.0), Some(ServerId::Two), Some(5.0)),
                (Some(3.0), Some(ServerId::One), Some(10.0)),
            ]
        );
        assert_eq!(r.q2_violation_intervals, vec![(3.0, 5.0)]);
        assert!(r.matches_table1());
    }

    #[test]
    fn scripted_or_state_at_four() {
        let r = replay_table1().unwrap();
        let at4 = r.trace.iter().rev().find(|s| s.time <= 4.0).unwrap();
        let c = at4.or.counters;
        assert_eq!((c.r1, c.r2, c.q2), (1, 1, 1));
    }

    #[test]
    fn scripted_search_hits_at_three() {
        let v = search_script(&ScriptedRun::table1()).unwrap().unwrap();
        assert_eq!((v.time, v.inequality, v.lhs, v.rhs), (3.0, Inequality::Q2, 1, 0));
    }

    #[test]
    fn zero_thresholds_show_no_violation() {
        let script = ScriptedRun { t1: 0.0, t2: 0.0, ..ScriptedRun::table1() };
        assert_eq!(search_script(&script).unwrap(), None);
        assert!(replay_script(&script).unwrap().violations.is_empty());
    }

    #[test]
    fn own_type_arrival_starts_immediately() {
        let s = SystemState::x_model(Discipline::Original, 5.0, 1.0).unwrap();
        let s = x_step(s, &Event { time: 0.0, kind: EventKind::Arrival1 }).unwrap();
        assert_eq!(s.in_service(ServerId::One).map(|j| j.id), Some(JobId(0)));
    }

    #[test]
    fn steps_reject_the_wrong_model() {
        let n = SystemState::n_model(Discipline::Original, 1.0).unwrap();
        assert!(x_step(n, &Event { time: 0.0, kind: EventKind::Arrival1 }).is_err());
        let or = SystemState::x_model(Discipline::Original, 1.0, 1.0).unwrap();
        assert!(x_ub_step(or, &Event { time: 0.0, kind: EventKind::Arrival1 }).is_err());
    }

    #[test]
    fn zero_threshold_or_equals_fcfs() {
        let streams = EventStreamSet::generate(Rates { lambda1: 0.9, lambda2: 0.8, mu1: 1.0, mu2: 1.0 }, 2000.0, 5).unwrap();
        let mut or = SystemState::x_model(Discipline::Original, 0.0, 0.0).unwrap();
        let mut fcfs = SystemState::x_model(Discipline::Fcfs, 0.0, 0.0).unwrap();
        let mut cursor = EventCursor::new(&streams);
        while let Some(e) = cursor.next_event() {
            let a = or.apply(&e).unwrap();
            let b = fcfs.apply(&e).unwrap();
            assert_eq!(a, b);
            assert_eq!(or.counters(), fcfs.counters());
        }
    }

    #[test]
    fn huge_thresholds_and_light_load_never_violate() {
        let config = XConfig {
            lambda1: 0.01,
            lambda2: 0.01,
            mu1: 1.0,
            mu2: 1.0,
            t1: 1e9,
            t2: 1e9,
            horizon: 1000.0,
            master_seed: 0,
        };
        let out = search_violations(&config, &(0..20).collect::<Vec<_>>()).unwrap();
        assert!(out.iter().all(|o| o.violation.is_none()));
    }

    #[test]
    fn script_validation() {
        let script = ScriptedRun { arrivals: vec![(1.0, JobType::One), (1.0, JobType::Two)], ..ScriptedRun::table1() };
        assert!(script.streams().is_err());
        let script = ScriptedRun { z2: vec![5.0, 13.0], ..ScriptedRun::table1() };
        assert!(script.streams().is_err());
    }
}
