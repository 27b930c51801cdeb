//! Coupled Poisson event streams and the chronological event list.
//!
//! All jump times are drawn eagerly up to the horizon. A pair of coupled
//! systems reads the same [`EventStreamSet`], which is what makes their
//! sample paths comparable event by event.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::{Serialize, Serializer};

use crate::dynamics::ScenarioConfig;
use crate::error::{Error, Result};

pub type Time = f64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct JobId(pub u64);

impl fmt::Display for JobId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Independent substreams carved out of one master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Substream {
    Arrival1 = 0,
    Arrival2 = 1,
    Service1 = 2,
    Service2 = 3,
    Inspection = 4,
}

/// Derives the seed of a substream. SplitMix64 finalizer over the master seed
/// offset by the substream index.
pub fn substream_seed(master_seed: u64, index: u64) -> u64 {
    let mut z = master_seed.wrapping_add(0x9E37_79B9_7F4A_7C15_u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Jump times of a homogeneous Poisson process on `(0, horizon]`.
///
/// Gaps are i.i.d. exponential with mean `1 / rate`; the result depends only
/// on `(rate, horizon, substream_seed)`.
pub fn sample_poisson_stream(rate: f64, horizon: Time, substream_seed: u64) -> Result<Vec<Time>> {
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::param(format!("rate must be finite and non-negative, got {rate}")));
    }
    if !(horizon > 0.0) || !horizon.is_finite() {
        return Err(Error::param(format!("horizon must be finite and positive, got {horizon}")));
    }
    if rate == 0.0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(substream_seed);
    let gap = Exp::new(rate).map_err(|e| Error::param(e.to_string()))?;
    let mut jumps = Vec::with_capacity((rate * horizon * 1.05) as usize + 16);
    let mut t = 0.0;
    loop {
        let next = t + gap.sample(&mut rng);
        if next > horizon {
            break;
        }
        // A zero gap (or one lost to rounding) would break strict monotonicity.
        if next > t {
            jumps.push(next);
            t = next;
        }
    }
    Ok(jumps)
}

/// Arrival and service rates of a two-type, two-server model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub lambda1: f64,
    pub lambda2: f64,
    pub mu1: f64,
    pub mu2: f64,
}

impl Rates {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("mu1", self.mu1),
            ("mu2", self.mu2),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(format!("{name} must be finite and strictly positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// The four jump-time sequences `A1, A2, Z1, Z2` shared by coupled systems.
#[derive(Debug, Clone, PartialEq)]
pub struct EventStreamSet {
    a1_jumps: Vec<Time>,
    a2_jumps: Vec<Time>,
    z1_jumps: Vec<Time>,
    z2_jumps: Vec<Time>,
    master_seed: u64,
    horizon: Time,
}

impl EventStreamSet {
    pub fn generate(rates: Rates, horizon: Time, master_seed: u64) -> Result<Self> {
        rates.validate()?;
        let stream = |rate, which: Substream| {
            sample_poisson_stream(rate, horizon, substream_seed(master_seed, which as u64))
        };
        Ok(EventStreamSet {
            a1_jumps: stream(rates.lambda1, Substream::Arrival1)?,
            a2_jumps: stream(rates.lambda2, Substream::Arrival2)?,
            z1_jumps: stream(rates.mu1, Substream::Service1)?,
            z2_jumps: stream(rates.mu2, Substream::Service2)?,
            master_seed,
            horizon,
        })
    }

    /// Explicit jump lists, used for scripted replays.
    pub fn from_jumps(
        a1_jumps: Vec<Time>,
        a2_jumps: Vec<Time>,
        z1_jumps: Vec<Time>,
        z2_jumps: Vec<Time>,
        horizon: Time,
    ) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(Error::param(format!("horizon must be finite and positive, got {horizon}")));
        }
        for (name, jumps) in [("a1", &a1_jumps), ("a2", &a2_jumps), ("z1", &z1_jumps), ("z2", &z2_jumps)] {
            check_jumps(name, jumps, horizon)?;
        }
        Ok(EventStreamSet { a1_jumps, a2_jumps, z1_jumps, z2_jumps, master_seed: 0, horizon })
    }

    pub fn a1_jumps(&self) -> &[Time] {
        &self.a1_jumps
    }

    pub fn a2_jumps(&self) -> &[Time] {
        &self.a2_jumps
    }

    pub fn z1_jumps(&self) -> &[Time] {
        &self.z1_jumps
    }

    pub fn z2_jumps(&self) -> &[Time] {
        &self.z2_jumps
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn horizon(&self) -> Time {
        self.horizon
    }

    fn stream(&self, index: usize) -> &[Time] {
        match index {
            0 => &self.a1_jumps,
            1 => &self.a2_jumps,
            2 => &self.z1_jumps,
            _ => &self.z2_jumps,
        }
    }
}

fn check_jumps(name: &str, jumps: &[Time], horizon: Time) -> Result<()> {
    if let Some(&first) = jumps.first() {
        if !(first >= 0.0) {
            return Err(Error::param(format!("{name}: jump times must be non-negative")));
        }
    }
    if jumps.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::param(format!("{name}: jump times must be strictly increasing")));
    }
    if jumps.last().is_some_and(|&t| !(t <= horizon)) {
        return Err(Error::param(format!("{name}: jump times must not exceed the horizon {horizon}")));
    }
    Ok(())
}

/// One stream set for both members of a coupled pair.
pub fn build_coupled_streams(config: &ScenarioConfig) -> Result<EventStreamSet> {
    EventStreamSet::generate(config.rates(), config.horizon, config.master_seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum EventKind {
    Arrival1,
    Arrival2,
    ThresholdExpiry(JobId),
    PotentialCompletion1,
    PotentialCompletion2,
}

impl EventKind {
    /// Processing order among events sharing a time stamp.
    pub fn priority(&self) -> u8 {
        match self {
            EventKind::Arrival1 => 0,
            EventKind::Arrival2 => 1,
            EventKind::ThresholdExpiry(_) => 2,
            EventKind::PotentialCompletion1 => 3,
            EventKind::PotentialCompletion2 => 4,
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EventKind::Arrival1 => f.write_str("arrival1"),
            EventKind::Arrival2 => f.write_str("arrival2"),
            EventKind::ThresholdExpiry(job) => write!(f, "expiry:{job}"),
            EventKind::PotentialCompletion1 => f.write_str("completion1"),
            EventKind::PotentialCompletion2 => f.write_str("completion2"),
        }
    }
}

impl Serialize for EventKind {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: Time,
    pub kind: EventKind,
}

impl Event {
    fn order(&self, other: &Event) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.priority().cmp(&other.kind.priority()))
            .then_with(|| match (self.kind, other.kind) {
                (EventKind::ThresholdExpiry(a), EventKind::ThresholdExpiry(b)) => a.cmp(&b),
                _ => Ordering::Equal,
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Clock {
    pub now: Time,
    pub last_event: Time,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct PendingExpiry {
    time: Time,
    job: JobId,
}

impl Eq for PendingExpiry {}

impl Ord for PendingExpiry {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then(other.job.cmp(&self.job))
    }
}

impl PartialOrd for PendingExpiry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Merges the four jump streams with pending threshold-expiry timers.
#[derive(Debug, Clone)]
pub struct EventCursor<'s> {
    streams: &'s EventStreamSet,
    positions: [usize; 4],
    expiries: BinaryHeap<PendingExpiry>,
    clock: Clock,
}

const STREAM_KINDS: [EventKind; 4] = [
    EventKind::Arrival1,
    EventKind::Arrival2,
    EventKind::PotentialCompletion1,
    EventKind::PotentialCompletion2,
];

impl<'s> EventCursor<'s> {
    pub fn new(streams: &'s EventStreamSet) -> Self {
        EventCursor { streams, positions: [0; 4], expiries: BinaryHeap::new(), clock: Clock::default() }
    }

    pub fn streams(&self) -> &'s EventStreamSet {
        self.streams
    }

    pub fn clock(&self) -> Clock {
        self.clock
    }

    /// Registers an expiry timer. The time is stored as given and never
    /// recomputed. Timers past the horizon are dropped; returns whether the
    /// timer was kept.
    pub fn schedule_expiry(&mut self, time: Time, job: JobId) -> bool {
        if time > self.streams.horizon {
            return false;
        }
        self.expiries.push(PendingExpiry { time, job });
        true
    }

    pub fn pending_expiries(&self) -> usize {
        self.expiries.len()
    }

    /// Next event in chronological order, `None` at the end of the horizon.
    pub fn next_event(&mut self) -> Option<Event> {
        let mut best: Option<(Event, Option<usize>)> = None;
        for (index, kind) in STREAM_KINDS.iter().enumerate() {
            if let Some(&time) = self.streams.stream(index).get(self.positions[index]) {
                let candidate = Event { time, kind: *kind };
                if best.as_ref().is_none_or(|(b, _)| candidate.order(b) == Ordering::Less) {
                    best = Some((candidate, Some(index)));
                }
            }
        }
        if let Some(pending) = self.expiries.peek() {
            let candidate = Event { time: pending.time, kind: EventKind::ThresholdExpiry(pending.job) };
            if best.as_ref().is_none_or(|(b, _)| candidate.order(b) == Ordering::Less) {
                best = Some((candidate, None));
            }
        }
        let (event, source) = best?;
        match source {
            Some(index) => self.positions[index] += 1,
            None => {
                self.expiries.pop();
            }
        }
        self.clock.last_event = self.clock.now;
        self.clock.now = event.time;
        Some(event)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scripted(a1: &[f64], a2: &[f64], z1: &[f64], z2: &[f64], horizon: f64) -> EventStreamSet {
        EventStreamSet::from_jumps(a1.to_vec(), a2.to_vec(), z1.to_vec(), z2.to_vec(), horizon).unwrap()
    }

    #[test]
    fn zero_rate_is_empty() {
        assert!(sample_poisson_stream(0.0, 100.0, 3).unwrap().is_empty());
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(matches!(sample_poisson_stream(-1.0, 10.0, 0), Err(Error::InvalidParameter(_))));
        assert!(matches!(sample_poisson_stream(1.0, 0.0, 0), Err(Error::InvalidParameter(_))));
        assert!(matches!(sample_poisson_stream(1.0, -5.0, 0), Err(Error::InvalidParameter(_))));
        let bad = Rates { lambda1: 1.0, lambda2: 0.0, mu1: 1.0, mu2: 1.0 };
        assert!(EventStreamSet::generate(bad, 10.0, 1).is_err());
    }

    #[test]
    fn stream_is_strictly_increasing_and_bounded() {
        let jumps = sample_poisson_stream(3.0, 500.0, 11).unwrap();
        assert!(jumps.windows(2).all(|w| w[0] < w[1]));
        assert!(jumps.iter().all(|&t| t > 0.0 && t <= 500.0));
    }

    #[test]
    fn gap_mean_matches_rate() {
        let jumps = sample_poisson_stream(1.0, 1e5, 42).unwrap();
        let gaps: Vec<f64> = std::iter::once(jumps[0]).chain(jumps.windows(2).map(|w| w[1] - w[0])).collect();
        let mean = gaps.iter().sum::<f64>() / gaps.len() as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean gap {mean}");
    }

    #[test]
    fn event_count_mean_over_seeds() {
        // Poisson(rate * horizon) = Poisson(10): standard error of the mean is sqrt(10 / n).
        let n = 10_000;
        let total: usize = (0..n).map(|s| sample_poisson_stream(2.0, 5.0, s as u64).unwrap().len()).sum();
        let mean = total as f64 / n as f64;
        let se = (10.0 / n as f64).sqrt();
        assert!((mean - 10.0).abs() < 3.0 * se, "mean count {mean}");
    }

    #[test]
    fn same_seed_same_streams() {
        let rates = Rates { lambda1: 0.7, lambda2: 0.3, mu1: 1.0, mu2: 1.2 };
        let a = EventStreamSet::generate(rates, 1000.0, 99).unwrap();
        let b = EventStreamSet::generate(rates, 1000.0, 99).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn substreams_are_independent_of_other_rates() {
        let rates = Rates { lambda1: 0.7, lambda2: 0.3, mu1: 1.0, mu2: 1.2 };
        let a = EventStreamSet::generate(rates, 1000.0, 5).unwrap();
        let b = EventStreamSet::generate(Rates { mu2: 2.0, ..rates }, 1000.0, 5).unwrap();
        assert_eq!(a.a1_jumps(), b.a1_jumps());
        assert_eq!(a.a2_jumps(), b.a2_jumps());
        assert_eq!(a.z1_jumps(), b.z1_jumps());
        assert_ne!(a.z2_jumps(), b.z2_jumps());
    }

    #[test]
    fn exhausted_cursor_ends() {
        let streams = scripted(&[], &[], &[], &[], 10.0);
        let mut cursor = EventCursor::new(&streams);
        assert_eq!(cursor.next_event(), None);
    }

    #[test]
    fn merges_in_time_order() {
        let streams = scripted(&[1.0, 3.0], &[], &[], &[2.0], 10.0);
        let mut cursor = EventCursor::new(&streams);
        let got: Vec<Event> = std::iter::from_fn(|| cursor.next_event()).collect();
        assert_eq!(
            got,
            vec![
                Event { time: 1.0, kind: EventKind::Arrival1 },
                Event { time: 2.0, kind: EventKind::PotentialCompletion2 },
                Event { time: 3.0, kind: EventKind::Arrival1 },
            ]
        );
    }

    #[test]
    fn expiry_is_arrival_plus_threshold() {
        let streams = scripted(&[2.0], &[], &[], &[], 20.0);
        let mut cursor = EventCursor::new(&streams);
        let arrival = cursor.next_event().unwrap();
        assert!(cursor.schedule_expiry(arrival.time + 5.0, JobId(0)));
        assert_eq!(cursor.next_event(), Some(Event { time: 7.0, kind: EventKind::ThresholdExpiry(JobId(0)) }));
        assert_eq!(cursor.next_event(), None);
    }

    #[test]
    fn ties_follow_fixed_priority() {
        let streams = scripted(&[4.0], &[4.0], &[4.0], &[4.0], 10.0);
        let mut cursor = EventCursor::new(&streams);
        cursor.schedule_expiry(4.0, JobId(9));
        cursor.schedule_expiry(4.0, JobId(3));
        let kinds: Vec<EventKind> = std::iter::from_fn(|| cursor.next_event()).map(|e| e.kind).collect();
        assert_eq!(
            kinds,
            vec![
                EventKind::Arrival1,
                EventKind::Arrival2,
                EventKind::ThresholdExpiry(JobId(3)),
                EventKind::ThresholdExpiry(JobId(9)),
                EventKind::PotentialCompletion1,
                EventKind::PotentialCompletion2,
            ]
        );
    }

    #[test]
    fn expiry_past_horizon_is_dropped() {
        let streams = scripted(&[], &[], &[], &[], 10.0);
        let mut cursor = EventCursor::new(&streams);
        assert!(!cursor.schedule_expiry(10.5, JobId(0)));
        assert_eq!(cursor.pending_expiries(), 0);
    }

    #[test]
    fn from_jumps_validates() {
        assert!(EventStreamSet::from_jumps(vec![2.0, 1.0], vec![], vec![], vec![], 10.0).is_err());
        assert!(EventStreamSet::from_jumps(vec![], vec![], vec![11.0], vec![], 10.0).is_err());
    }
}
