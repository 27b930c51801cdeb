//! Empirical stability: queue-growth drift, region sweeps, and the two
//! distributional checks on the upper-bound system.

use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF, Discrete, DiscreteCDF, Poisson, StudentsT};

use crate::dynamics::{inside_stability_region, Counters, Discipline, ScenarioConfig, Simulation};
use crate::error::{Error, Result};
use crate::events::{build_coupled_streams, sample_poisson_stream, substream_seed, Substream, Time};

/// Seed of replication `r` under `master_seed`.
pub fn replication_seed(master_seed: u64, r: u64) -> u64 {
    substream_seed(master_seed ^ 0x005E_ED0F_2E91_1CA7, r)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Classification {
    #[serde(rename = "stable-evidence")]
    StableEvidence,
    #[serde(rename = "unstable-evidence")]
    UnstableEvidence,
    #[serde(rename = "inconclusive")]
    Inconclusive,
}

impl Classification {
    pub fn as_str(&self) -> &'static str {
        match self {
            Classification::StableEvidence => "stable-evidence",
            Classification::UnstableEvidence => "unstable-evidence",
            Classification::Inconclusive => "inconclusive",
        }
    }
}

/// Stable if `|slope| <= 3 stderr + eps0`, unstable if `slope` exceeds that band.
pub fn classify(slope: f64, slope_stderr: f64, eps0: f64) -> Classification {
    let band = 3.0 * slope_stderr + eps0;
    if slope.abs() <= band {
        Classification::StableEvidence
    } else if slope > band {
        Classification::UnstableEvidence
    } else {
        Classification::Inconclusive
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSettings {
    /// Slack added to the 3-sigma band, in jobs per time unit.
    pub eps0: f64,
    /// Number of regression windows across the horizon.
    pub windows: usize,
    /// Leading fraction of the horizon discarded as warm-up.
    pub warmup_fraction: f64,
}

impl Default for DriftSettings {
    fn default() -> Self {
        DriftSettings { eps0: 0.01, windows: 100, warmup_fraction: 0.2 }
    }
}

/// Queue length whose growth is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    /// `Q1 + Q2`
    Total,
    Queue1,
    Queue2,
}

impl Observable {
    fn read(self, c: &Counters) -> f64 {
        (match self {
            Observable::Total => c.waiting(),
            Observable::Queue1 => c.q1(),
            Observable::Queue2 => c.q2,
        }) as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DriftEstimate {
    pub slope: f64,
    pub slope_stderr: f64,
    pub classification: Classification,
    /// Every observed window mean was zero.
    pub degenerate: bool,
}

/// Time integrals of a piecewise-constant signal over equal windows of `[start, end]`.
#[derive(Debug, Clone)]
pub struct WindowedIntegrator {
    start: Time,
    width: Time,
    sums: Vec<f64>,
    last_t: Time,
    value: f64,
}

impl WindowedIntegrator {
    pub fn new(start: Time, end: Time, windows: usize) -> Self {
        assert!(end > start && windows > 0);
        WindowedIntegrator {
            start,
            width: (end - start) / windows as f64,
            sums: vec![0.0; windows],
            last_t: start,
            value: 0.0,
        }
    }

    /// The signal switches to `value` at time `t`.
    pub fn advance(&mut self, t: Time, value: f64) {
        let n = self.sums.len();
        let mut t0 = self.last_t;
        while t0 < t {
            let mut idx = (((t0 - self.start) / self.width) as usize).min(n - 1);
            let bound = |i: usize| if i + 1 == n { f64::INFINITY } else { self.start + (i + 1) as f64 * self.width };
            while idx + 1 < n && bound(idx) <= t0 {
                idx += 1;
            }
            let end = t.min(bound(idx));
            self.sums[idx] += self.value * (end - t0);
            t0 = end;
        }
        self.last_t = self.last_t.max(t);
        self.value = value;
    }

    /// Window means, closing the last window at `end`.
    pub fn finish(mut self, end: Time) -> Vec<f64> {
        self.advance(end, 0.0);
        let width = self.width;
        self.sums.into_iter().map(|s| s / width).collect()
    }
}

/// Ordinary least squares slope and its standard error.
pub fn linear_fit(points: &[(f64, f64)]) -> (f64, f64) {
    let n = points.len() as f64;
    let xbar = points.iter().map(|p| p.0).sum::<f64>() / n;
    let ybar = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - xbar).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - xbar) * (p.1 - ybar)).sum();
    let slope = sxy / sxx;
    let ssr: f64 = points.iter().map(|p| (p.1 - ybar - slope * (p.0 - xbar)).powi(2)).sum();
    let stderr = if n > 2.0 { (ssr / (n - 2.0) / sxx).sqrt() } else { f64::INFINITY };
    (slope, stderr)
}

/// Window means of one replication after the warm-up, as `(midpoint, mean)`.
fn window_points(config: &ScenarioConfig, observable: Observable, settings: &DriftSettings) -> Result<Vec<(f64, f64)>> {
    let horizon = config.horizon;
    let streams = build_coupled_streams(config)?;
    let mut integrator = WindowedIntegrator::new(0.0, horizon, settings.windows);
    Simulation::new(&streams, config.initial_state()?).run(|event, state| {
        integrator.advance(event.map_or(0.0, |e| e.time), observable.read(&state.counters()));
        Ok(())
    })?;
    let means = integrator.finish(horizon);
    let width = horizon / settings.windows as f64;
    let skip = (settings.warmup_fraction * settings.windows as f64).round() as usize;
    Ok(means
        .into_iter()
        .enumerate()
        .skip(skip)
        .map(|(i, m)| ((i as f64 + 0.5) * width, m))
        .collect())
}

/// Drift of `observable` pooled over one run per seed.
pub fn estimate_drift_with(
    config: &ScenarioConfig,
    seeds: &[u64],
    observable: Observable,
    settings: &DriftSettings,
) -> Result<DriftEstimate> {
    config.validate()?;
    if seeds.len() < 3 {
        return Err(Error::param(format!("at least 3 replications are required, got {}", seeds.len())));
    }
    let kept = settings.windows - (settings.warmup_fraction * settings.windows as f64).round() as usize;
    if kept < 50 {
        return Err(Error::param(format!("{kept} post-warm-up windows; at least 50 are required")));
    }
    let per_seed: Vec<Vec<(f64, f64)>> = seeds
        .par_iter()
        .map(|&seed| window_points(&config.with_seed(seed), observable, settings))
        .collect::<Result<_>>()?;
    let mut points: Vec<(f64, f64)> = per_seed.into_iter().flatten().collect();
    // Sorting makes the pooled fit independent of seed order.
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    if points.iter().all(|p| p.1 == 0.0) {
        return Ok(DriftEstimate {
            slope: 0.0,
            slope_stderr: 0.0,
            classification: Classification::StableEvidence,
            degenerate: true,
        });
    }
    let (slope, slope_stderr) = linear_fit(&points);
    Ok(DriftEstimate {
        slope,
        slope_stderr,
        classification: classify(slope, slope_stderr, settings.eps0),
        degenerate: false,
    })
}

/// Drift of `Q1 + Q2` with default settings over `replications` derived seeds.
pub fn estimate_drift(config: &ScenarioConfig, replications: usize) -> Result<DriftEstimate> {
    let seeds: Vec<u64> = (0..replications as u64).map(|r| replication_seed(config.master_seed, r)).collect();
    estimate_drift_with(config, &seeds, Observable::Total, &DriftSettings::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThresholdDrift {
    pub threshold: Time,
    pub drift: DriftEstimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionPoint {
    pub lambda1: f64,
    pub lambda2: f64,
    pub inside_theory: bool,
    pub drifts: Vec<ThresholdDrift>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSettings {
    pub mu1: f64,
    pub mu2: f64,
    pub horizon: Time,
    pub replications: usize,
    pub master_seed: u64,
    pub drift: DriftSettings,
}

const BOUNDARY_TOLERANCE: f64 = 1e-9;

pub fn on_boundary(lambda1: f64, lambda2: f64, mu1: f64, mu2: f64) -> bool {
    (lambda1 + lambda2 - (mu1 + mu2)).abs() <= BOUNDARY_TOLERANCE * (mu1 + mu2)
        || (lambda2 - mu2).abs() <= BOUNDARY_TOLERANCE * mu2
}

/// Classifies every grid point under every threshold. A zero threshold runs
/// the plain FCFS N-model.
pub fn sweep_region(grid: &[(f64, f64)], thresholds: &[Time], settings: &SweepSettings) -> Result<Vec<RegionPoint>> {
    if let Some(&(lambda1, lambda2)) = grid.iter().find(|&&(l1, l2)| on_boundary(l1, l2, settings.mu1, settings.mu2)) {
        return Err(Error::BoundaryPoint { lambda1, lambda2 });
    }
    if thresholds.is_empty() {
        return Err(Error::param("at least one threshold is required"));
    }
    let seeds: Vec<u64> = (0..settings.replications as u64).map(|r| replication_seed(settings.master_seed, r)).collect();
    let tasks: Vec<(usize, Time)> =
        (0..grid.len()).flat_map(|i| thresholds.iter().map(move |&t| (i, t))).collect();
    let drifts: Vec<DriftEstimate> = tasks
        .par_iter()
        .map(|&(i, t)| {
            let (lambda1, lambda2) = grid[i];
            let config = ScenarioConfig {
                lambda1,
                lambda2,
                mu1: settings.mu1,
                mu2: settings.mu2,
                threshold_t: t,
                horizon: settings.horizon,
                master_seed: settings.master_seed,
                discipline: if t == 0.0 { Discipline::Fcfs } else { Discipline::Original },
            };
            estimate_drift_with(&config, &seeds, Observable::Total, &settings.drift)
        })
        .collect::<Result<_>>()?;
    Ok(grid
        .iter()
        .enumerate()
        .map(|(i, &(lambda1, lambda2))| RegionPoint {
            lambda1,
            lambda2,
            inside_theory: inside_stability_region(lambda1, lambda2, settings.mu1, settings.mu2),
            drifts: thresholds
                .iter()
                .enumerate()
                .map(|(j, &threshold)| ThresholdDrift { threshold, drift: drifts[i * thresholds.len() + j] })
                .collect(),
        })
        .collect())
}

/// Euclidean distance from `(lambda1, lambda2)` to the nearer of the lines
/// `lambda1 + lambda2 = mu1 + mu2` and `lambda2 = mu2`.
pub fn boundary_distance(lambda1: f64, lambda2: f64, mu1: f64, mu2: f64) -> f64 {
    let total = (lambda1 + lambda2 - (mu1 + mu2)).abs() / std::f64::consts::SQRT_2;
    total.min((lambda2 - mu2).abs())
}

/// Whether a classification matches the theoretical region membership.
pub fn agrees_with_theory(inside: bool, classification: Classification) -> bool {
    match classification {
        Classification::StableEvidence => inside,
        Classification::UnstableEvidence => !inside,
        Classification::Inconclusive => false,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepAgreement {
    pub points: usize,
    /// Fraction of (point, threshold) pairs whose class matches the theory.
    pub theory_agreement: f64,
    /// Fraction of points classified identically under every threshold.
    pub threshold_invariance: f64,
}

pub fn summarize_sweep(points: &[RegionPoint]) -> SweepAgreement {
    let pairs: Vec<bool> = points
        .iter()
        .flat_map(|p| p.drifts.iter().map(move |d| agrees_with_theory(p.inside_theory, d.drift.classification)))
        .collect();
    let invariant = points
        .iter()
        .filter(|p| p.drifts.windows(2).all(|w| w[0].drift.classification == w[1].drift.classification))
        .count();
    let frac = |k: usize, n: usize| if n == 0 { 1.0 } else { k as f64 / n as f64 };
    SweepAgreement {
        points: points.len(),
        theory_agreement: frac(pairs.iter().filter(|&&a| a).count(), pairs.len()),
        threshold_invariance: frac(invariant, points.len()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquareBin {
    pub low: u64,
    /// Inclusive upper end; `None` for the open tail bin.
    pub high: Option<u64>,
    pub observed: u64,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PastaSummary {
    pub samples: usize,
    pub theoretical_mean: f64,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub dispersion: f64,
    pub chi_square: f64,
    pub degrees_of_freedom: usize,
    pub p_value: f64,
    pub bins: Vec<ChiSquareBin>,
    pub all_zero: bool,
}

impl PastaSummary {
    pub fn mean_within_3se(&self) -> bool {
        (self.mean - self.theoretical_mean).abs() <= 3.0 * self.std_error
    }

    pub fn dispersion_ok(&self) -> bool {
        (0.9..=1.1).contains(&self.dispersion)
    }

    pub fn passes(&self) -> bool {
        self.mean_within_3se() && self.dispersion_ok() && self.p_value > 0.01
    }
}

/// Chi-square goodness of fit of integer counts against Poisson(`mean`).
/// Adjacent values are pooled until every bin expects at least five.
pub fn poisson_chi_square(counts: &[u64], mean: f64) -> (f64, usize, f64, Vec<ChiSquareBin>) {
    let n = counts.len() as f64;
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut observed = vec![0u64; max as usize + 1];
    for &c in counts {
        observed[c as usize] += 1;
    }
    let dist = Poisson::new(mean).expect("positive mean");
    let mut bins: Vec<ChiSquareBin> = Vec::new();
    let mut low = 0u64;
    let mut expected = 0.0;
    let mut obs = 0u64;
    let mut k = 0u64;
    loop {
        expected += n * dist.pmf(k);
        obs += observed.get(k as usize).copied().unwrap_or(0);
        let tail = n * dist.sf(k);
        if expected >= 5.0 && tail >= 5.0 {
            bins.push(ChiSquareBin { low, high: Some(k), observed: obs, expected });
            low = k + 1;
            expected = 0.0;
            obs = 0;
        } else if tail < 5.0 {
            let rest: u64 = observed.iter().skip(k as usize + 1).sum();
            bins.push(ChiSquareBin { low, high: None, observed: obs + rest, expected: expected + tail });
            break;
        }
        k += 1;
    }
    // A too-small final bin is folded into its predecessor.
    if bins.len() >= 2 && bins.last().unwrap().expected < 5.0 {
        let last = bins.pop().unwrap();
        let prev = bins.last_mut().unwrap();
        prev.high = None;
        prev.observed += last.observed;
        prev.expected += last.expected;
    }
    let dof = bins.len().saturating_sub(1);
    if dof == 0 {
        return (0.0, 0, 1.0, bins);
    }
    let stat: f64 = bins.iter().map(|b| (b.observed as f64 - b.expected).powi(2) / b.expected).sum();
    let p = 1.0 - ChiSquared::new(dof as f64).expect("positive dof").cdf(stat);
    (stat, dof, p, bins)
}

/// Samples `Q1-` of the UB system at inspection epochs after the warm-up and
/// compares them with Poisson(`lambda1 * T`).
///
/// Inspection epochs come from an independent Poisson stream of rate `1/T`
/// with a dead time of `T` after each kept epoch, so observation windows
/// `(tau - T, tau]` never overlap and the samples are independent.
pub fn pasta_check(config: &ScenarioConfig, sample_count: usize) -> Result<PastaSummary> {
    let config = config.with_discipline(Discipline::UpperBound);
    config.validate()?;
    let t = config.threshold_t;
    let horizon = config.horizon;
    let warmup = (0.2 * horizon).max(10.0 * t);
    let raw = sample_poisson_stream(1.0 / t, horizon, substream_seed(config.master_seed, Substream::Inspection as u64))?;
    let mut inspections = Vec::new();
    let mut last_kept = f64::NEG_INFINITY;
    for tau in raw {
        if tau >= warmup && tau - last_kept >= t {
            inspections.push(tau);
            last_kept = tau;
        }
    }
    let streams = build_coupled_streams(&config)?;
    let mut samples: Vec<u64> = Vec::with_capacity(inspections.len());
    let mut next = 0;
    let mut current = 0u64;
    let mut record_until = |t: Time, current: u64, next: &mut usize| {
        while *next < inspections.len() && inspections[*next] < t {
            samples.push(current);
            *next += 1;
        }
    };
    Simulation::new(&streams, config.initial_state()?).run(|event, state| {
        if let Some(e) = event {
            record_until(e.time, current, &mut next);
        }
        current = state.counters().q1_minus;
        Ok(())
    })?;
    record_until(f64::INFINITY, current, &mut next);
    if samples.len() < sample_count {
        return Err(Error::InsufficientData { needed: sample_count, collected: samples.len() });
    }
    samples.truncate(sample_count);
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<u64>() as f64 / n;
    let variance = samples.iter().map(|&x| (x as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let theoretical_mean = config.lambda1 * t;
    let (chi_square, degrees_of_freedom, p_value, bins) = poisson_chi_square(&samples, theoretical_mean);
    Ok(PastaSummary {
        samples: samples.len(),
        theoretical_mean,
        mean,
        variance,
        std_error: (variance / n).sqrt(),
        dispersion: variance / mean,
        chi_square,
        degrees_of_freedom,
        p_value,
        bins,
        all_zero: samples.iter().all(|&x| x == 0),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanCi {
    pub replications: usize,
    pub mean: f64,
    pub half_width: f64,
    pub low: f64,
    pub high: f64,
}

impl MeanCi {
    /// Student-t interval at confidence `level`.
    pub fn from_values(values: &[f64], level: f64) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let q = StudentsT::new(0.0, 1.0, n - 1.0).expect("n >= 2").inverse_cdf(0.5 + level / 2.0);
        let half_width = q * (var / n).sqrt();
        MeanCi { replications: values.len(), mean, half_width, low: mean - half_width, high: mean + half_width }
    }

    pub fn overlaps(&self, other: &MeanCi) -> bool {
        self.low <= other.high && other.low <= self.high
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FcfsEquivalence {
    /// Time-average of `Q1+ + Q2` in the UB system.
    pub upper_bound: MeanCi,
    /// Time-average of waiting jobs in the plain FCFS N-model.
    pub fcfs: MeanCi,
    pub overlap: bool,
}

fn post_warmup_average(config: &ScenarioConfig, read: impl Fn(&Counters) -> f64) -> Result<f64> {
    let horizon = config.horizon;
    let streams = build_coupled_streams(config)?;
    let mut integrator = WindowedIntegrator::new(0.2 * horizon, horizon, 1);
    Simulation::new(&streams, config.initial_state()?).run(|event, state| {
        let t = event.map_or(0.0, |e| e.time);
        integrator.advance(t.max(0.2 * horizon), read(&state.counters()));
        Ok(())
    })?;
    Ok(integrator.finish(horizon)[0])
}

/// Compares the waiting count of the UB system past its delay stage with the
/// plain FCFS N-model on independent seeds (95% intervals).
pub fn fcfs_equivalence_check(config: &ScenarioConfig, replications: usize) -> Result<FcfsEquivalence> {
    fcfs_equivalence_check_with(config, replications, Discipline::UpperBound)
}

/// As [`fcfs_equivalence_check`] with `delayed` (`UpperBound` or `Tandem`)
/// in place of the UB system.
pub fn fcfs_equivalence_check_with(
    config: &ScenarioConfig,
    replications: usize,
    delayed: Discipline,
) -> Result<FcfsEquivalence> {
    if !matches!(delayed, Discipline::UpperBound | Discipline::Tandem) {
        return Err(Error::param(format!("{delayed} does not delay type-1 jobs at both servers")));
    }
    let ub = config.with_discipline(delayed);
    ub.validate()?;
    if !config.inside_stability_region() {
        return Err(Error::Unstable(format!(
            "lambda = ({}, {}), mu = ({}, {})",
            config.lambda1, config.lambda2, config.mu1, config.mu2
        )));
    }
    if replications < 2 {
        return Err(Error::param("at least 2 replications are required"));
    }
    let fcfs_master = substream_seed(config.master_seed, 1000);
    let runs: Vec<(f64, f64)> = (0..replications as u64)
        .into_par_iter()
        .map(|r| {
            let a = post_warmup_average(&ub.with_seed(replication_seed(config.master_seed, r)), |c| {
                (c.q1_plus + c.q2) as f64
            })?;
            let fcfs = config.with_discipline(Discipline::Fcfs).with_seed(replication_seed(fcfs_master, r));
            let b = post_warmup_average(&fcfs, |c| c.waiting() as f64)?;
            Ok((a, b))
        })
        .collect::<Result<_>>()?;
    let upper_bound = MeanCi::from_values(&runs.iter().map(|r| r.0).collect::<Vec<_>>(), 0.95);
    let fcfs = MeanCi::from_values(&runs.iter().map(|r| r.1).collect::<Vec<_>>(), 0.95);
    Ok(FcfsEquivalence { upper_bound, fcfs, overlap: upper_bound.overlaps(&fcfs) })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(l1: f64, l2: f64, m1: f64, m2: f64, t: f64, horizon: f64) -> ScenarioConfig {
        ScenarioConfig {
            lambda1: l1,
            lambda2: l2,
            mu1: m1,
            mu2: m2,
            threshold_t: t,
            horizon,
            master_seed: 3,
            discipline: Discipline::Original,
        }
    }

    #[test]
    fn classification_bands() {
        assert_eq!(classify(0.005, 0.0, 0.01), Classification::StableEvidence);
        assert_eq!(classify(0.05, 0.01, 0.01), Classification::UnstableEvidence);
        assert_eq!(classify(-0.05, 0.01, 0.01), Classification::Inconclusive);
        assert_eq!(classify(0.039, 0.01, 0.01), Classification::StableEvidence);
    }

    #[test]
    fn linear_fit_recovers_exact_line() {
        let pts: Vec<(f64, f64)> = (0..20).map(|i| (i as f64, 2.0 + 0.5 * i as f64)).collect();
        let (slope, se) = linear_fit(&pts);
        assert!((slope - 0.5).abs() < 1e-12);
        assert!(se < 1e-9);
    }

    #[test]
    fn integrator_averages_piecewise_constant_signal() {
        let mut w = WindowedIntegrator::new(0.0, 10.0, 2);
        w.advance(0.0, 1.0);
        w.advance(2.5, 3.0);
        w.advance(7.5, 0.0);
        let means = w.finish(10.0);
        // [0,5): 1 on [0,2.5), 3 on [2.5,5) -> 2; [5,10): 3 on [5,7.5), 0 after -> 1.5
        assert_eq!(means, vec![2.0, 1.5]);
    }

    #[test]
    fn integrator_ignores_time_before_start() {
        let mut w = WindowedIntegrator::new(5.0, 10.0, 1);
        w.advance(5.0, 2.0);
        w.advance(6.0, 4.0);
        assert_eq!(w.finish(10.0), vec![(2.0 + 4.0 * 4.0) / 5.0]);
    }

    #[test]
    fn drift_requires_three_replications() {
        let err = estimate_drift(&cfg(0.4, 0.4, 1.0, 1.0, 1.0, 1000.0), 2).unwrap_err();
        assert!(matches!(err, Error::InvalidParameter(_)));
    }

    #[test]
    fn light_load_is_stable() {
        let d = estimate_drift(&cfg(0.4, 0.4, 1.0, 1.0, 1.0, 20_000.0), 3).unwrap();
        assert_eq!(d.classification, Classification::StableEvidence, "{d:?}");
    }

    #[test]
    fn degenerate_trace_is_flagged() {
        let d = estimate_drift(&cfg(1e-9, 1e-9, 1.0, 1.0, 1.0, 1000.0), 3).unwrap();
        assert!(d.degenerate);
        assert_eq!((d.slope, d.classification), (0.0, Classification::StableEvidence));
    }

    #[test]
    fn seed_order_does_not_matter() {
        let c = cfg(1.1, 0.5, 1.0, 1.0, 2.0, 5000.0);
        let s = DriftSettings::default();
        let a = estimate_drift_with(&c, &[1, 2, 3, 4], Observable::Total, &s).unwrap();
        let b = estimate_drift_with(&c, &[4, 2, 1, 3], Observable::Total, &s).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn boundary_points_are_rejected() {
        let settings = SweepSettings {
            mu1: 1.0,
            mu2: 1.0,
            horizon: 1000.0,
            replications: 3,
            master_seed: 0,
            drift: DriftSettings::default(),
        };
        assert!(matches!(sweep_region(&[(0.5, 1.0)], &[1.0], &settings), Err(Error::BoundaryPoint { .. })));
        assert!(matches!(sweep_region(&[(1.5, 0.5)], &[1.0], &settings), Err(Error::BoundaryPoint { .. })));
    }

    #[test]
    fn boundary_distance_to_both_lines() {
        assert!((boundary_distance(0.5, 0.5, 1.0, 1.0) - 0.5).abs() < 1e-12);
        assert!((boundary_distance(1.5, 0.2, 1.0, 1.0) - 0.3 / std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn agreement_summary() {
        let d = |c| ThresholdDrift {
            threshold: 1.0,
            drift: DriftEstimate { slope: 0.0, slope_stderr: 0.0, classification: c, degenerate: false },
        };
        let points = vec![
            RegionPoint {
                lambda1: 0.2,
                lambda2: 0.2,
                inside_theory: true,
                drifts: vec![d(Classification::StableEvidence), d(Classification::StableEvidence)],
            },
            RegionPoint {
                lambda1: 2.0,
                lambda2: 0.2,
                inside_theory: false,
                drifts: vec![d(Classification::UnstableEvidence), d(Classification::Inconclusive)],
            },
        ];
        let s = summarize_sweep(&points);
        assert_eq!((s.theory_agreement, s.threshold_invariance), (0.75, 0.5));
    }

    #[test]
    fn pasta_theoretical_mean() {
        let s = pasta_check(&cfg(2.0, 0.5, 2.0, 1.0, 0.5, 3000.0), 1000).unwrap();
        assert_eq!(s.theoretical_mean, 1.0);
    }

    #[test]
    fn pasta_vanishing_arrivals_stay_empty() {
        let s = pasta_check(&cfg(1e-6, 0.5, 2.0, 1.0, 0.5, 2000.0), 500).unwrap();
        assert!(s.all_zero);
        assert_eq!(s.degrees_of_freedom, 0);
    }

    #[test]
    fn pasta_insufficient_samples() {
        let err = pasta_check(&cfg(2.0, 0.5, 2.0, 1.0, 0.5, 100.0), 10_000).unwrap_err();
        assert!(matches!(err, Error::InsufficientData { .. }));
    }

    #[test]
    fn chi_square_bins_cover_everything() {
        let counts: Vec<u64> = (0..1000).map(|i| (i % 4) as u64).collect();
        let (_, dof, _, bins) = poisson_chi_square(&counts, 1.5);
        assert_eq!(bins.iter().map(|b| b.observed).sum::<u64>(), 1000);
        assert!((bins.iter().map(|b| b.expected).sum::<f64>() - 1000.0).abs() < 1e-6);
        assert!(bins.iter().all(|b| b.expected >= 5.0));
        assert_eq!(dof, bins.len() - 1);
    }

    #[test]
    fn fcfs_equivalence_refuses_unstable() {
        let err = fcfs_equivalence_check(&cfg(1.5, 0.8, 1.0, 1.0, 1.0, 1000.0), 5).unwrap_err();
        assert!(matches!(err, Error::Unstable(_)));
    }

    #[test]
    fn equivalence_rejects_undelayed_systems() {
        let err = fcfs_equivalence_check_with(&cfg(0.4, 0.4, 1.0, 1.0, 1.0, 1000.0), 5, Discipline::Original);
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
    }

    #[test]
    fn mean_ci_overlap() {
        let a = MeanCi::from_values(&[1.0, 2.0, 3.0], 0.95);
        assert!((a.mean - 2.0).abs() < 1e-12);
        // t_{0.975, 2} = 4.302652...
        assert!((a.half_width - 4.302652729749464 * (1.0f64 / 3.0).sqrt()).abs() < 1e-6);
        let b = MeanCi { replications: 3, mean: 10.0, half_width: 1.0, low: 9.0, high: 11.0 };
        assert!(!a.overlaps(&b));
    }
}
