//! Per-step metric rows and their CSV form.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Fixed CSV header; optional columns are written empty when absent.
pub const TRACE_HEADER: &str =
    "step,f_value,grad_norm,estimator_error_sq,gap,lambda_min,accuracy,cum_grad_calls,cum_vectors_sent,wall_time";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    /// Step (centralized) or round (federated).
    pub step: usize,
    pub f_value: f64,
    pub grad_norm: f64,
    /// `‖v − ∇f‖²` of the algorithm's estimator, when it keeps one.
    pub estimator_error_sq: Option<f64>,
    /// `f − f*` when known.
    pub gap: Option<f64>,
    pub lambda_min: Option<f64>,
    pub accuracy: Option<f64>,
    pub cum_grad_calls: u64,
    /// Federated runs only.
    pub cum_vectors_sent: Option<u64>,
    /// Seconds since run start; only filled when wall-clock recording is on.
    pub wall_time: Option<f64>,
}

pub trait TraceSink {
    fn record(&mut self, record: &TraceRecord) -> Result<()>;
}

impl TraceSink for Vec<TraceRecord> {
    fn record(&mut self, record: &TraceRecord) -> Result<()> {
        self.push(record.clone());
        Ok(())
    }
}

/// Discards everything.
#[derive(Debug, Default, Clone, Copy)]
pub struct NullTrace;

impl TraceSink for NullTrace {
    fn record(&mut self, _record: &TraceRecord) -> Result<()> {
        Ok(())
    }
}

/// Streams records as CSV rows, header first.
pub struct CsvTrace<W: Write> {
    out: W,
    wrote_header: bool,
}

impl<W: Write> CsvTrace<W> {
    pub fn new(out: W) -> Self {
        Self { out, wrote_header: false }
    }

    pub fn into_inner(mut self) -> Result<W> {
        if !self.wrote_header {
            writeln!(self.out, "{TRACE_HEADER}")?;
        }
        self.out.flush()?;
        Ok(self.out)
    }
}

fn opt<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

impl<W: Write> TraceSink for CsvTrace<W> {
    fn record(&mut self, r: &TraceRecord) -> Result<()> {
        if !self.wrote_header {
            writeln!(self.out, "{TRACE_HEADER}")?;
            self.wrote_header = true;
        }
        writeln!(
            self.out,
            "{},{},{},{},{},{},{},{},{},{}",
            r.step,
            r.f_value,
            r.grad_norm,
            opt(r.estimator_error_sq),
            opt(r.gap),
            opt(r.lambda_min),
            opt(r.accuracy),
            r.cum_grad_calls,
            opt(r.cum_vectors_sent),
            opt(r.wall_time),
        )?;
        Ok(())
    }
}

pub fn write_trace_csv<W: Write>(records: &[TraceRecord], out: W) -> Result<W> {
    let mut sink = CsvTrace::new(out);
    for r in records {
        sink.record(r)?;
    }
    sink.into_inner()
}

pub fn read_trace_csv<R: BufRead>(input: R) -> Result<Vec<TraceRecord>> {
    let mut lines = input.lines();
    let header = lines.next().transpose()?.unwrap_or_default();
    if header.trim() != TRACE_HEADER {
        return Err(Error::Parse { line: 1, message: "unexpected trace header".into() });
    }
    let mut out = Vec::new();
    for (k, line) in lines.enumerate() {
        let lineno = k + 2;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split(',').collect();
        if cols.len() != 10 {
            return Err(Error::Parse { line: lineno, message: format!("expected 10 columns, got {}", cols.len()) });
        }
        let bad = |what: &str| Error::Parse { line: lineno, message: format!("bad {what}") };
        let f = |s: &str, what: &str| s.parse::<f64>().map_err(|_| bad(what));
        let of = |s: &str, what: &str| if s.is_empty() { Ok(None) } else { f(s, what).map(Some) };
        out.push(TraceRecord {
            step: cols[0].parse().map_err(|_| bad("step"))?,
            f_value: f(cols[1], "f_value")?,
            grad_norm: f(cols[2], "grad_norm")?,
            estimator_error_sq: of(cols[3], "estimator_error_sq")?,
            gap: of(cols[4], "gap")?,
            lambda_min: of(cols[5], "lambda_min")?,
            accuracy: of(cols[6], "accuracy")?,
            cum_grad_calls: cols[7].parse().map_err(|_| bad("cum_grad_calls"))?,
            cum_vectors_sent: if cols[8].is_empty() {
                None
            } else {
                Some(cols[8].parse().map_err(|_| bad("cum_vectors_sent"))?)
            },
            wall_time: of(cols[9], "wall_time")?,
        });
    }
    Ok(out)
}
