//! CSV and JSON output. Column order is fixed and times are printed with 12
//! significant digits.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;

use crate::coupling::{Companion, Pair, TraceSample, ViolationReport};
use crate::dynamics::Counters;
use crate::error::Result;
use crate::events::{EventKind, Time};
use crate::stability::RegionPoint;
use crate::xmodel::{JobRecord, ReplayReport};

const SIGNIFICANT: i32 = 12;

/// Formats like C's `%.12g`.
pub fn fmt_time(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{:.*e}", (SIGNIFICANT - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..SIGNIFICANT).contains(&exp) {
        let m = trim_zeros(mantissa);
        format!("{m}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    } else {
        trim_zeros(&format!("{:.*}", (SIGNIFICANT - 1 - exp) as usize, x)).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

fn event_label(event: Option<EventKind>) -> String {
    event.map_or_else(|| "init".to_string(), |e| e.to_string())
}

const COUNTER_COLUMNS: [&str; 6] = ["q1_minus", "q1_plus", "q2", "r1", "r2", "r3"];

fn counter_fields(c: &Counters) -> impl Iterator<Item = String> {
    c.as_array().into_iter().map(|v| v.to_string())
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

/// Streaming trace writer for coupled runs.
pub struct CoupledTraceWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> CoupledTraceWriter<W> {
    pub fn new(w: W, pair: Pair) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        let mut header: Vec<String> = vec!["time".into(), "event_kind".into()];
        header.extend(COUNTER_COLUMNS.iter().map(|c| c.to_string()));
        match pair {
            Pair::OrUb => header.extend(COUNTER_COLUMNS.iter().map(|c| format!("ub_{c}"))),
            Pair::OrMm1 => header.extend(["n2_bar".to_string(), "n_bar".to_string()]),
        }
        inner.write_record(&header)?;
        Ok(CoupledTraceWriter { inner })
    }

    pub fn write(&mut self, sample: &TraceSample) -> Result<()> {
        let mut row = vec![fmt_time(sample.time), event_label(sample.event)];
        row.extend(counter_fields(&sample.or.counters));
        match &sample.companion {
            Companion::UpperBound(ub) => row.extend(counter_fields(&ub.counters)),
            Companion::LowerBounds(lb) => row.extend([lb.n2.to_string(), lb.n.to_string()]),
        }
        self.inner.write_record(&row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// Streaming trace writer for a single system.
pub struct SystemTraceWriter<W: Write> {
    inner: csv::Writer<W>,
}

impl<W: Write> SystemTraceWriter<W> {
    pub fn new(w: W) -> Result<Self> {
        let mut inner = csv::Writer::from_writer(w);
        let mut header = vec!["time", "event_kind"];
        header.extend(COUNTER_COLUMNS);
        inner.write_record(&header)?;
        Ok(SystemTraceWriter { inner })
    }

    pub fn write(&mut self, time: Time, event: Option<EventKind>, counters: &Counters) -> Result<()> {
        let mut row = vec![fmt_time(time), event_label(event)];
        row.extend(counter_fields(counters));
        self.inner.write_record(&row)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner.flush()?;
        Ok(())
    }
}

/// One JSON object per line.
pub fn write_jsonl<W: Write, T: Serialize>(mut w: W, items: &[T]) -> Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_violations_jsonl<W: Write>(w: W, violations: &[ViolationReport]) -> Result<()> {
    write_jsonl(w, violations)
}

pub fn write_json<W: Write, T: Serialize>(mut w: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

/// One row per grid point and threshold.
pub fn write_sweep_csv<W: Write>(w: W, points: &[RegionPoint]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["lambda1", "lambda2", "T", "inside_theory", "slope", "slope_stderr", "classification"])?;
    for p in points {
        for d in &p.drifts {
            out.write_record([
                fmt_time(p.lambda1),
                fmt_time(p.lambda2),
                fmt_time(d.threshold),
                p.inside_theory.to_string(),
                fmt_time(d.drift.slope),
                fmt_time(d.drift.slope_stderr),
                d.drift.classification.as_str().to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

fn opt_time(t: Option<Time>) -> String {
    t.map(fmt_time).unwrap_or_default()
}

/// Per-job records of a scripted replay, OR rows before UB rows.
pub fn write_job_records_csv<W: Write>(w: W, or: &[JobRecord], ub: &[JobRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["system", "job", "type", "arrival", "start", "server", "departure"])?;
    for (system, records) in [("or", or), ("ub", ub)] {
        for r in records {
            out.write_record([
                system.to_string(),
                (r.id.0 + 1).to_string(),
                (r.job_type.index() + 1).to_string(),
                fmt_time(r.arrival),
                opt_time(r.start),
                r.server.map(|s| (s.index() + 1).to_string()).unwrap_or_default(),
                opt_time(r.departure),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct ReplaySummary {
    pub matches_table1: bool,
    pub or_records: Vec<JobRecord>,
    pub ub_records: Vec<JobRecord>,
    pub violations: Vec<ViolationReport>,
    pub q2_violation_intervals: Vec<(Time, Time)>,
    pub status: &'static str,
}

impl ReplaySummary {
    pub fn new(report: &ReplayReport, table1: bool) -> Self {
        let matches = table1 && report.matches_table1();
        ReplaySummary {
            matches_table1: matches,
            or_records: report.or_records.clone(),
            ub_records: report.ub_records.clone(),
            violations: report.violations.clone(),
            q2_violation_intervals: report.q2_violation_intervals.clone(),
            status: match (table1, matches, report.violations.is_empty()) {
                (true, true, _) => "confirmed-counterexample",
                (true, false, _) => "mismatch",
                (false, _, true) => "no-violation",
                (false, _, false) => "violation",
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coupling::{run_coupled, Inequality};
    use crate::dynamics::{Discipline, ScenarioConfig};

    #[test]
    fn time_formatting_matches_printf_g() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.5, "0.5"),
            (10000.0, "10000"),
            (1.0 / 3.0, "0.333333333333"),
            (2.0 / 3.0 * 1000.0, "666.666666667"),
            (123456789012.0, "123456789012"),
            (1234567890123.0, "1.23456789012e+12"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (-2.5, "-2.5"),
        ];
        for (x, want) in cases {
            assert_eq!(fmt_time(x), want, "{x}");
        }
    }

    #[test]
    fn trace_csv_layout() {
        let config = ScenarioConfig {
            lambda1: 0.5,
            lambda2: 0.5,
            mu1: 1.0,
            mu2: 1.0,
            threshold_t: 1.0,
            horizon: 20.0,
            master_seed: 1,
            discipline: Discipline::Original,
        };
        let trace = run_coupled(&config, Pair::OrUb).unwrap();
        let mut buf = Vec::new();
        let mut w = CoupledTraceWriter::new(&mut buf, Pair::OrUb).unwrap();
        for s in &trace {
            w.write(s).unwrap();
        }
        w.finish().unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "time,event_kind,q1_minus,q1_plus,q2,r1,r2,r3,ub_q1_minus,ub_q1_plus,ub_q2,ub_r1,ub_r2,ub_r3"
        );
        assert_eq!(lines.next().unwrap(), "0,init,0,0,0,0,0,0,0,0,0,0,0,0");
        assert_eq!(text.lines().count(), trace.len() + 1);
    }

    #[test]
    fn violations_jsonl_shape() {
        let v = ViolationReport {
            time: 3.0,
            inequality: Inequality::Q2,
            lhs: 1,
            rhs: 0,
            event_kind: Some(EventKind::ThresholdExpiry(crate::events::JobId(2))),
        };
        let mut buf = Vec::new();
        write_violations_jsonl(&mut buf, &[v]).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "{\"time\":3.0,\"inequality\":\"Q2\",\"lhs\":1,\"rhs\":0,\"event_kind\":\"expiry:2\"}\n"
        );
    }
}
