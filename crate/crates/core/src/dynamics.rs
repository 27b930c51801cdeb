//! State machines for the two-type, two-server models.
//!
//! One [`SystemState`] covers every variant in the crate. The topology picks
//! which server may serve which job type at all, the discipline picks when a
//! waiting job becomes available to a server:
//!
//! * `Original`: a server takes its own type at any age, the cross type only
//!   once the job's age has reached that type's threshold.
//! * `UpperBound`: a job is unavailable to every server until its threshold.
//! * `Fcfs`: thresholds are zero, so every waiting job is available at once.
//!
//! Within a type jobs are served first-come-first-served; a freed server picks
//! the longest-waiting job it may serve.

use std::collections::VecDeque;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::events::{Event, EventCursor, EventKind, EventStreamSet, JobId, Rates, Time};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum JobType {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl JobType {
    pub fn index(self) -> usize {
        match self {
            JobType::One => 0,
            JobType::Two => 1,
        }
    }

    pub fn from_number(n: u8) -> Option<JobType> {
        match n {
            1 => Some(JobType::One),
            2 => Some(JobType::Two),
            _ => None,
        }
    }

    fn from_index(i: usize) -> JobType {
        if i == 0 { JobType::One } else { JobType::Two }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ServerId {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2")]
    Two,
}

impl ServerId {
    pub fn index(self) -> usize {
        match self {
            ServerId::One => 0,
            ServerId::Two => 1,
        }
    }

    fn from_index(i: usize) -> ServerId {
        if i == 0 { ServerId::One } else { ServerId::Two }
    }

    /// The job type this server is dedicated to.
    pub fn own_type(self) -> JobType {
        JobType::from_index(self.index())
    }
}

impl fmt::Display for ServerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index() + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Job {
    pub id: JobId,
    pub job_type: JobType,
    pub arrival_time: Time,
    /// Position among jobs of the same type, in arrival order.
    pub type_seq: u64,
    /// `arrival_time + threshold`, computed once at admission.
    pub eligible_at: Time,
}

impl Job {
    pub fn needs_expiry(&self) -> bool {
        self.eligible_at > self.arrival_time
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Topology {
    /// Server 1 serves type 1 only; server 2 serves both.
    N,
    /// Both servers serve both types.
    X,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Discipline {
    #[serde(rename = "or")]
    Original,
    #[serde(rename = "ub")]
    UpperBound,
    #[serde(rename = "fcfs")]
    Fcfs,
    /// UB eligibility, but jobs are ordered by the time they became eligible:
    /// a delay stage of length T in tandem with an FCFS N-model.
    #[serde(rename = "tandem")]
    Tandem,
}

impl fmt::Display for Discipline {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Discipline::Original => "or",
            Discipline::UpperBound => "ub",
            Discipline::Fcfs => "fcfs",
            Discipline::Tandem => "tandem",
        })
    }
}

/// Waiting-time phase of a queued job relative to its type's threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Young,
    Aged,
}

#[derive(Debug, Clone, Default)]
struct TypeQueue {
    young: VecDeque<Job>,
    aged: VecDeque<Job>,
}

impl TypeQueue {
    fn len(&self) -> usize {
        self.young.len() + self.aged.len()
    }

    fn push(deque: &mut VecDeque<Job>, job: Job) {
        if let Some(back) = deque.back() {
            assert!(back.type_seq < job.type_seq, "queue must stay in arrival order");
        }
        deque.push_back(job);
    }
}

/// Queue and server counters `(Q1-, Q1+, Q2, R1, R2, R3)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Counters {
    pub q1_minus: u64,
    pub q1_plus: u64,
    pub q2: u64,
    pub r1: u64,
    pub r2: u64,
    pub r3: u64,
}

impl Counters {
    pub fn q1(&self) -> u64 {
        self.q1_minus + self.q1_plus
    }

    pub fn waiting(&self) -> u64 {
        self.q1() + self.q2
    }

    pub fn in_service(&self) -> u64 {
        self.r1 + self.r2 + self.r3
    }

    pub fn total_in_system(&self) -> u64 {
        self.waiting() + self.in_service()
    }

    pub fn as_array(&self) -> [u64; 6] {
        [self.q1_minus, self.q1_plus, self.q2, self.r1, self.r2, self.r3]
    }
}

/// What a single event did to a system.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepOutcome {
    pub admitted: Option<Job>,
    pub started: Option<(Job, ServerId)>,
    pub departed: Option<(Job, ServerId)>,
}

#[derive(Debug, Clone)]
pub struct SystemState {
    topology: Topology,
    discipline: Discipline,
    thresholds: [Time; 2],
    queues: [TypeQueue; 2],
    servers: [Option<Job>; 2],
    next_id: u64,
    type_counts: [u64; 2],
    last_update: Time,
}

impl SystemState {
    /// N-model with threshold `threshold` on the diagonal. Ignored for `Fcfs`.
    pub fn n_model(discipline: Discipline, threshold: Time) -> Result<Self> {
        let t1 = if discipline == Discipline::Fcfs { 0.0 } else { threshold };
        Self::new(Topology::N, discipline, [t1, 0.0])
    }

    /// X-model with thresholds for type 1 at server 2 and type 2 at server 1.
    pub fn x_model(discipline: Discipline, t1: Time, t2: Time) -> Result<Self> {
        let thresholds = if discipline == Discipline::Fcfs { [0.0, 0.0] } else { [t1, t2] };
        Self::new(Topology::X, discipline, thresholds)
    }

    fn new(topology: Topology, discipline: Discipline, thresholds: [Time; 2]) -> Result<Self> {
        if thresholds.iter().any(|t| !(*t >= 0.0) || !t.is_finite()) {
            return Err(Error::param(format!("thresholds must be finite and non-negative, got {thresholds:?}")));
        }
        Ok(SystemState {
            topology,
            discipline,
            thresholds,
            queues: Default::default(),
            servers: [None, None],
            next_id: 0,
            type_counts: [0, 0],
            last_update: 0.0,
        })
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn discipline(&self) -> Discipline {
        self.discipline
    }

    pub fn threshold(&self, job_type: JobType) -> Time {
        self.thresholds[job_type.index()]
    }

    pub fn last_update(&self) -> Time {
        self.last_update
    }

    pub fn queue(&self, job_type: JobType, phase: Phase) -> &VecDeque<Job> {
        let q = &self.queues[job_type.index()];
        match phase {
            Phase::Young => &q.young,
            Phase::Aged => &q.aged,
        }
    }

    pub fn in_service(&self, server: ServerId) -> Option<&Job> {
        self.servers[server.index()].as_ref()
    }

    pub fn jobs_admitted(&self) -> u64 {
        self.next_id
    }

    pub fn counters(&self) -> Counters {
        counters(self)
    }

    /// Whether `server` may take a waiting job of `job_type` in `phase`.
    pub fn eligible(&self, server: ServerId, job_type: JobType, phase: Phase) -> bool {
        if self.topology == Topology::N && server == ServerId::One && job_type == JobType::Two {
            return false;
        }
        let aged = phase == Phase::Aged;
        if server.own_type() == job_type {
            !self.delays_own_type() || aged
        } else {
            aged
        }
    }

    fn delays_own_type(&self) -> bool {
        matches!(self.discipline, Discipline::UpperBound | Discipline::Tandem)
    }

    /// Applies one event at `event.time`.
    pub fn apply(&mut self, event: &Event) -> Result<StepOutcome> {
        let now = event.time;
        if !(now >= self.last_update) {
            return Err(Error::InvalidEvent(format!(
                "event at {now} precedes last update {}",
                self.last_update
            )));
        }
        let outcome = match event.kind {
            EventKind::Arrival1 => self.arrive(JobType::One, now),
            EventKind::Arrival2 => self.arrive(JobType::Two, now),
            EventKind::ThresholdExpiry(job) => self.expire(job, now)?,
            EventKind::PotentialCompletion1 => self.complete(ServerId::One),
            EventKind::PotentialCompletion2 => self.complete(ServerId::Two),
        };
        self.last_update = now;
        debug_assert!(self.check_local_invariants().is_ok(), "{:?}", self.check_local_invariants());
        Ok(outcome)
    }

    fn arrive(&mut self, job_type: JobType, now: Time) -> StepOutcome {
        let k = job_type.index();
        let job = Job {
            id: JobId(self.next_id),
            job_type,
            arrival_time: now,
            type_seq: self.type_counts[k],
            eligible_at: now + self.thresholds[k],
        };
        self.next_id += 1;
        self.type_counts[k] += 1;
        let phase = if job.needs_expiry() { Phase::Young } else { Phase::Aged };
        let started = self.offer(job, phase);
        if started.is_none() {
            let q = &mut self.queues[k];
            match phase {
                Phase::Young => TypeQueue::push(&mut q.young, job),
                Phase::Aged => TypeQueue::push(&mut q.aged, job),
            }
        }
        StepOutcome { admitted: Some(job), started, ..Default::default() }
    }

    fn expire(&mut self, id: JobId, _now: Time) -> Result<StepOutcome> {
        if self.discipline == Discipline::Fcfs {
            return Err(Error::InvalidEvent(format!("threshold expiry for job {id} under FCFS")));
        }
        if id.0 >= self.next_id {
            return Err(Error::CorruptedTrace(format!("expiry references unknown job {id}")));
        }
        let Some(k) = (0..2).find(|&k| self.queues[k].young.front().is_some_and(|j| j.id == id)) else {
            // Already in service or departed, unless the trace is out of order.
            if self.queues.iter().any(|q| q.young.iter().any(|j| j.id == id)) {
                return Err(Error::CorruptedTrace(format!("expiry for job {id} arrived out of order")));
            }
            if self.queues.iter().any(|q| q.aged.iter().any(|j| j.id == id)) {
                return Err(Error::CorruptedTrace(format!("duplicate expiry for job {id}")));
            }
            return Ok(StepOutcome::default());
        };
        let job = self.queues[k].young.pop_front().expect("front checked above");
        let started = self.offer(job, Phase::Aged);
        if started.is_none() {
            TypeQueue::push(&mut self.queues[k].aged, job);
        }
        Ok(StepOutcome { started, ..Default::default() })
    }

    fn complete(&mut self, server: ServerId) -> StepOutcome {
        let Some(job) = self.servers[server.index()].take() else {
            return StepOutcome::default();
        };
        let started = self.pick_next(server).map(|next| {
            self.servers[server.index()] = Some(next);
            (next, server)
        });
        StepOutcome { departed: Some((job, server)), started, ..Default::default() }
    }

    /// Starts a newly available job at an idle eligible server, own-type
    /// server first. Non-idling guarantees no other job competes for it.
    fn offer(&mut self, job: Job, phase: Phase) -> Option<(Job, ServerId)> {
        let own = ServerId::from_index(job.job_type.index());
        let other = ServerId::from_index(1 - job.job_type.index());
        let server = [own, other]
            .into_iter()
            .find(|&s| self.servers[s.index()].is_none() && self.eligible(s, job.job_type, phase))?;
        self.servers[server.index()] = Some(job);
        Some((job, server))
    }

    /// First-in-line job of `job_type` that `server` may take, if any.
    fn candidate(&self, server: ServerId, job_type: JobType) -> Option<(Phase, &Job)> {
        let q = &self.queues[job_type.index()];
        if let Some(job) = q.aged.front() {
            if self.eligible(server, job_type, Phase::Aged) {
                return Some((Phase::Aged, job));
            }
        }
        match q.young.front() {
            Some(job) if q.aged.is_empty() && self.eligible(server, job_type, Phase::Young) => {
                Some((Phase::Young, job))
            }
            _ => None,
        }
    }

    /// Longest-waiting eligible job; an exact tie goes to the server's own type.
    /// Under `Tandem` waiting is counted from eligibility instead of arrival.
    fn best_candidate(&self, server: ServerId) -> Option<(JobType, Phase)> {
        let own = server.own_type();
        let other = JobType::from_index(1 - own.index());
        match (self.candidate(server, own), self.candidate(server, other)) {
            (Some((p, a)), Some((q, b))) => {
                let key = |j: &Job| if self.discipline == Discipline::Tandem { j.eligible_at } else { j.arrival_time };
                if key(b) < key(a) {
                    Some((other, q))
                } else {
                    Some((own, p))
                }
            }
            (Some((p, _)), None) => Some((own, p)),
            (None, Some((q, _))) => Some((other, q)),
            (None, None) => None,
        }
    }

    fn pick_next(&mut self, server: ServerId) -> Option<Job> {
        let (job_type, phase) = self.best_candidate(server)?;
        let q = &mut self.queues[job_type.index()];
        match phase {
            Phase::Young => q.young.pop_front(),
            Phase::Aged => q.aged.pop_front(),
        }
    }

    /// O(1) checks run after every step in debug builds.
    fn check_local_invariants(&self) -> std::result::Result<(), String> {
        for server in [ServerId::One, ServerId::Two] {
            if self.servers[server.index()].is_none() && self.best_candidate(server).is_some() {
                return Err(format!("server {server} idles with an eligible job waiting"));
            }
        }
        let now = self.last_update;
        for q in &self.queues {
            if q.young.front().is_some_and(|j| j.eligible_at < now) {
                return Err(format!("job past its threshold still young at {now}"));
            }
            if q.aged.back().is_some_and(|j| j.eligible_at > now) {
                return Err(format!("job aged before its threshold at {now}"));
            }
        }
        Ok(())
    }

    /// Full structural check of the state, linear in the number of waiting jobs.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        self.check_local_invariants()?;
        let now = self.last_update;
        for (k, q) in self.queues.iter().enumerate() {
            for deque in [&q.young, &q.aged] {
                if deque.iter().any(|j| j.job_type.index() != k) {
                    return Err(format!("job of the wrong type in queue {}", k + 1));
                }
                if deque.iter().zip(deque.iter().skip(1)).any(|(a, b)| !(a.type_seq < b.type_seq)) {
                    return Err(format!("queue {} out of arrival order", k + 1));
                }
            }
            // Ties at `now` are legal while same-time expiries are pending.
            if q.young.iter().any(|j| !(now <= j.eligible_at)) {
                return Err(format!("young job in queue {} past its threshold", k + 1));
            }
            if q.aged.iter().any(|j| !(j.eligible_at <= now)) {
                return Err(format!("aged job in queue {} before its threshold", k + 1));
            }
            if let (Some(a), Some(y)) = (q.aged.back(), q.young.front()) {
                if !(a.type_seq < y.type_seq) {
                    return Err(format!("aged and young jobs of type {} interleave", k + 1));
                }
            }
        }
        if self.topology == Topology::N && self.servers[0].is_some_and(|j| j.job_type == JobType::Two) {
            return Err("type-2 job at server 1 in the N-model".into());
        }
        Ok(())
    }
}

/// Counters read off a state; `Q1 = Q1- + Q1+`.
pub fn counters(state: &SystemState) -> Counters {
    let [q1, q2] = &state.queues;
    let server2 = state.servers[1].map(|j| j.job_type);
    Counters {
        q1_minus: q1.young.len() as u64,
        q1_plus: q1.aged.len() as u64,
        q2: q2.len() as u64,
        r1: state.servers[0].is_some() as u64,
        r2: (server2 == Some(JobType::Two)) as u64,
        r3: (server2 == Some(JobType::One)) as u64,
    }
}

fn step_checked(
    mut state: SystemState,
    event: &Event,
    topology: Topology,
    discipline: Discipline,
) -> Result<SystemState> {
    if state.topology != topology || state.discipline != discipline {
        return Err(Error::InvalidInput(format!(
            "expected a {topology:?}/{discipline} state, got {:?}/{}",
            state.topology, state.discipline
        )));
    }
    state.apply(event)?;
    Ok(state)
}

/// One event of the original N-model (threshold on the diagonal).
pub fn or_step(state: SystemState, event: &Event) -> Result<SystemState> {
    step_checked(state, event, Topology::N, Discipline::Original)
}

/// One event of the upper-bound N-model (threshold before both servers).
pub fn ub_step(state: SystemState, event: &Event) -> Result<SystemState> {
    step_checked(state, event, Topology::N, Discipline::UpperBound)
}

/// One event of the plain FCFS N-model.
pub fn fcfs_step(state: SystemState, event: &Event) -> Result<SystemState> {
    step_checked(state, event, Topology::N, Discipline::Fcfs)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub threshold_t: Time,
    pub horizon: Time,
    pub master_seed: u64,
    pub discipline: Discipline,
}

impl ScenarioConfig {
    pub fn rates(&self) -> Rates {
        Rates { lambda1: self.lambda1, lambda2: self.lambda2, mu1: self.mu1, mu2: self.mu2 }
    }

    pub fn validate(&self) -> Result<()> {
        self.rates().validate()?;
        if !(self.threshold_t >= 0.0) || !self.threshold_t.is_finite() {
            return Err(Error::param(format!("threshold must be finite and non-negative, got {}", self.threshold_t)));
        }
        if self.threshold_t == 0.0 && self.discipline != Discipline::Fcfs {
            return Err(Error::param("a zero threshold is only allowed for the FCFS discipline"));
        }
        if !(self.horizon > 0.0) || !self.horizon.is_finite() {
            return Err(Error::param(format!("horizon must be finite and positive, got {}", self.horizon)));
        }
        Ok(())
    }

    pub fn with_discipline(self, discipline: Discipline) -> Self {
        ScenarioConfig { discipline, ..self }
    }

    pub fn with_seed(self, master_seed: u64) -> Self {
        ScenarioConfig { master_seed, ..self }
    }

    /// Empty N-model state for this configuration's discipline.
    pub fn initial_state(&self) -> Result<SystemState> {
        SystemState::n_model(self.discipline, self.threshold_t)
    }

    /// Strict membership in `lambda1 + lambda2 < mu1 + mu2` and `lambda2 < mu2`.
    pub fn inside_stability_region(&self) -> bool {
        inside_stability_region(self.lambda1, self.lambda2, self.mu1, self.mu2)
    }
}

pub fn inside_stability_region(lambda1: f64, lambda2: f64, mu1: f64, mu2: f64) -> bool {
    lambda1 + lambda2 < mu1 + mu2 && lambda2 < mu2
}

/// Drives one system through a stream set, scheduling expiry timers.
#[derive(Debug, Clone)]
pub struct Simulation<'s> {
    cursor: EventCursor<'s>,
    state: SystemState,
}

impl<'s> Simulation<'s> {
    pub fn new(streams: &'s EventStreamSet, state: SystemState) -> Self {
        Simulation { cursor: EventCursor::new(streams), state }
    }

    pub fn state(&self) -> &SystemState {
        &self.state
    }

    pub fn horizon(&self) -> Time {
        self.cursor.streams().horizon()
    }

    pub fn step(&mut self) -> Result<Option<(Event, StepOutcome)>> {
        let Some(event) = self.cursor.next_event() else {
            return Ok(None);
        };
        let outcome = self.state.apply(&event)?;
        if let Some(job) = outcome.admitted.filter(Job::needs_expiry) {
            self.cursor.schedule_expiry(job.eligible_at, job.id);
        }
        Ok(Some((event, outcome)))
    }

    /// Runs to the horizon. `observe` sees the initial state (with `None`) and
    /// the state after every event; each state holds until the next call.
    pub fn run(
        mut self,
        mut observe: impl FnMut(Option<&Event>, &SystemState) -> Result<()>,
    ) -> Result<SystemState> {
        observe(None, &self.state)?;
        while let Some((event, _)) = self.step()? {
            observe(Some(&event), &self.state)?;
        }
        Ok(self.state)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(time: f64, kind: EventKind) -> Event {
        Event { time, kind }
    }

    fn or_state(t: f64) -> SystemState {
        SystemState::n_model(Discipline::Original, t).unwrap()
    }

    fn ub_state(t: f64) -> SystemState {
        SystemState::n_model(Discipline::UpperBound, t).unwrap()
    }

    fn fcfs_state() -> SystemState {
        SystemState::n_model(Discipline::Fcfs, 0.0).unwrap()
    }

    #[test]
    fn empty_counters() {
        assert_eq!(or_state(1.0).counters(), Counters::default());
    }

    #[test]
    fn or_arrival_to_empty_system_starts_at_server1() {
        let s = or_step(or_state(1.0), &ev(0.0, EventKind::Arrival1)).unwrap();
        let c = s.counters();
        assert_eq!((c.r1, c.q1()), (1, 0));
        assert_eq!(s.in_service(ServerId::One).unwrap().id, JobId(0));
    }

    #[test]
    fn or_young_type1_waits_while_server2_idles() {
        let mut s = or_state(1.0);
        s = or_step(s, &ev(0.0, EventKind::Arrival1)).unwrap();
        s = or_step(s, &ev(0.1, EventKind::Arrival1)).unwrap();
        let c = s.counters();
        assert_eq!((c.q1_minus, c.r1, c.r2, c.r3), (1, 1, 0, 0));
    }

    #[test]
    fn or_expiry_hands_job_to_idle_server2() {
        let mut s = or_state(1.0);
        s = or_step(s, &ev(0.0, EventKind::Arrival1)).unwrap();
        s = or_step(s, &ev(0.5, EventKind::Arrival1)).unwrap();
        s = or_step(s, &ev(1.5, EventKind::ThresholdExpiry(JobId(1)))).unwrap();
        let c = s.counters();
        assert_eq!((c.q1(), c.r1, c.r3), (0, 1, 1));
    }

    #[test]
    fn or_server2_prefers_longer_waiting_type2() {
        // Server 2 busy with a type-2 job; then a type-2 job (arrival 0.5) and
        // an aged type-1 job (arrival 1.0) both wait.
        let mut s = or_state(0.25);
        s = or_step(s, &ev(0.0, EventKind::Arrival1)).unwrap(); // job 0 at server 1
        s = or_step(s, &ev(0.1, EventKind::Arrival2)).unwrap(); // job 1 at server 2
        s = or_step(s, &ev(0.5, EventKind::Arrival2)).unwrap(); // job 2 waits
        s = or_step(s, &ev(1.0, EventKind::Arrival1)).unwrap(); // job 3 young
        s = or_step(s, &ev(1.25, EventKind::ThresholdExpiry(JobId(3)))).unwrap();
        assert_eq!(s.counters().q1_plus, 1);
        s = or_step(s, &ev(1.5, EventKind::PotentialCompletion2)).unwrap();
        assert_eq!(s.in_service(ServerId::Two).unwrap().id, JobId(2));
        assert_eq!(s.counters().q1_plus, 1);
    }

    #[test]
    fn ub_holds_type1_until_threshold_then_server1() {
        let mut s = ub_state(1.0);
        s = ub_step(s, &ev(0.0, EventKind::Arrival1)).unwrap();
        assert_eq!(s.counters(), Counters { q1_minus: 1, ..Default::default() });
        s = ub_step(s, &ev(1.0, EventKind::ThresholdExpiry(JobId(0)))).unwrap();
        assert_eq!(s.counters(), Counters { r1: 1, ..Default::default() });
    }

    #[test]
    fn tandem_orders_by_eligibility() {
        let run = |discipline| {
            let mut s = SystemState::n_model(discipline, 1.0).unwrap();
            for e in [
                ev(0.0, EventKind::Arrival1),
                ev(0.5, EventKind::Arrival2), // job 1 at server 2
                ev(1.0, EventKind::ThresholdExpiry(JobId(0))), // job 0 at server 1
                ev(1.25, EventKind::Arrival1), // job 2, eligible at 2.25
                ev(1.5, EventKind::Arrival2), // job 3 waits
                ev(2.25, EventKind::ThresholdExpiry(JobId(2))),
                ev(2.5, EventKind::PotentialCompletion2),
            ] {
                s.apply(&e).unwrap();
            }
            s.in_service(ServerId::Two).unwrap().id
        };
        assert_eq!(run(Discipline::UpperBound), JobId(2));
        assert_eq!(run(Discipline::Tandem), JobId(3));
    }

    #[test]
    fn ub_type2_is_never_delayed() {
        let s = ub_step(ub_state(3.0), &ev(0.4, EventKind::Arrival2)).unwrap();
        assert_eq!(s.counters(), Counters { r2: 1, ..Default::default() });
    }

    #[test]
    fn potential_completion_at_idle_server_is_noop() {
        let s = ub_state(1.0);
        let before = s.counters();
        let s = ub_step(s, &ev(0.3, EventKind::PotentialCompletion2)).unwrap();
        assert_eq!(s.counters(), before);
    }

    #[test]
    fn fcfs_both_idle_goes_to_server1() {
        let s = fcfs_step(fcfs_state(), &ev(0.0, EventKind::Arrival1)).unwrap();
        assert_eq!(s.counters().r1, 1);
    }

    #[test]
    fn fcfs_server2_takes_type1_immediately() {
        let mut s = fcfs_state();
        s = fcfs_step(s, &ev(0.0, EventKind::Arrival1)).unwrap();
        s = fcfs_step(s, &ev(0.5, EventKind::Arrival1)).unwrap();
        assert_eq!(s.counters(), Counters { r1: 1, r3: 1, ..Default::default() });
    }

    #[test]
    fn fcfs_freed_server2_takes_earlier_type1() {
        let mut s = fcfs_state();
        s = fcfs_step(s, &ev(0.0, EventKind::Arrival1)).unwrap(); // server 1
        s = fcfs_step(s, &ev(1.0, EventKind::Arrival2)).unwrap(); // server 2
        s = fcfs_step(s, &ev(3.0, EventKind::Arrival1)).unwrap(); // waits
        s = fcfs_step(s, &ev(5.0, EventKind::Arrival2)).unwrap(); // waits
        s = fcfs_step(s, &ev(6.0, EventKind::PotentialCompletion2)).unwrap();
        let job = s.in_service(ServerId::Two).unwrap();
        assert_eq!((job.job_type, job.arrival_time), (JobType::One, 3.0));
    }

    #[test]
    fn fcfs_rejects_expiry() {
        let s = fcfs_step(fcfs_state(), &ev(0.0, EventKind::Arrival1)).unwrap();
        let err = fcfs_step(s, &ev(1.0, EventKind::ThresholdExpiry(JobId(0)))).unwrap_err();
        assert!(matches!(err, Error::InvalidEvent(_)));
    }

    #[test]
    fn unknown_job_is_corrupted_trace() {
        let err = or_step(or_state(1.0), &ev(1.0, EventKind::ThresholdExpiry(JobId(4)))).unwrap_err();
        assert!(matches!(err, Error::CorruptedTrace(_)));
    }

    #[test]
    fn expiry_after_service_start_is_ignored() {
        let mut s = or_state(1.0);
        s = or_step(s, &ev(0.0, EventKind::Arrival1)).unwrap();
        let before = s.counters();
        s = or_step(s, &ev(1.0, EventKind::ThresholdExpiry(JobId(0)))).unwrap();
        assert_eq!(s.counters(), before);
    }

    #[test]
    fn step_rejects_wrong_discipline() {
        assert!(ub_step(or_state(1.0), &ev(0.0, EventKind::Arrival1)).is_err());
    }

    #[test]
    fn time_must_not_go_backwards() {
        let s = or_step(or_state(1.0), &ev(2.0, EventKind::Arrival1)).unwrap();
        assert!(matches!(or_step(s, &ev(1.0, EventKind::Arrival2)), Err(Error::InvalidEvent(_))));
    }

    #[test]
    fn server2_type1_counter() {
        let mut s = fcfs_state();
        s = fcfs_step(s, &ev(0.0, EventKind::Arrival1)).unwrap();
        s = fcfs_step(s, &ev(0.1, EventKind::Arrival1)).unwrap();
        s = fcfs_step(s, &ev(0.2, EventKind::PotentialCompletion1)).unwrap();
        assert_eq!(s.counters(), Counters { r3: 1, ..Default::default() });
    }

    #[test]
    fn config_validation() {
        let base = ScenarioConfig {
            lambda1: 0.4,
            lambda2: 0.4,
            mu1: 1.0,
            mu2: 1.0,
            threshold_t: 1.0,
            horizon: 100.0,
            master_seed: 1,
            discipline: Discipline::Original,
        };
        assert!(base.validate().is_ok());
        assert!(ScenarioConfig { threshold_t: 0.0, ..base }.validate().is_err());
        assert!(ScenarioConfig { threshold_t: 0.0, discipline: Discipline::Fcfs, ..base }.validate().is_ok());
        assert!(ScenarioConfig { mu2: 0.0, ..base }.validate().is_err());
        assert!(base.inside_stability_region());
        assert!(!ScenarioConfig { lambda2: 1.0, ..base }.inside_stability_region());
    }
}
