//! Trace CSV and run summaries.
//!
//! Header is exactly `restart,epoch,effective_passes,wall_time_s,suboptimality`,
//! optionally followed by `sweep_value` and `threads`. Floats use the shortest
//! round-trip representation, so equal runs give equal bytes outside the
//! wall-time column.

use std::fs::File;
use std::io::{self, Write};
use std::path::Path;

use accsvrg::{SolverOutput, TraceRecord};

use crate::error::CliError;

pub const TRACE_COLUMNS: [&str; 5] = ["restart", "epoch", "effective_passes", "wall_time_s", "suboptimality"];

/// Extra tag columns appended after the trace columns.
#[derive(Debug, Clone, Copy, Default)]
pub struct Tags {
    pub sweep_value: bool,
    pub threads: bool,
}

pub struct TraceWriter {
    inner: csv::Writer<Box<dyn Write>>,
    tags: Tags,
}

/// Opens `path`, or stdout when absent.
pub fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>, CliError> {
    Ok(match path {
        Some(p) => Box::new(io::BufWriter::new(
            File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

impl TraceWriter {
    pub fn new(out: Box<dyn Write>, tags: Tags) -> Result<Self, CliError> {
        let mut inner = csv::Writer::from_writer(out);
        let mut header: Vec<&str> = TRACE_COLUMNS.to_vec();
        if tags.sweep_value {
            header.push("sweep_value");
        }
        if tags.threads {
            header.push("threads");
        }
        inner.write_record(&header)?;
        Ok(Self { inner, tags })
    }

    pub fn write_trace(&mut self, trace: &[TraceRecord], sweep_value: Option<f64>, threads: Option<usize>) -> Result<(), CliError> {
        for r in trace {
            let mut rec = vec![
                r.restart.to_string(),
                r.epoch.to_string(),
                r.effective_passes.to_string(),
                r.wall_time.to_string(),
                r.suboptimality.to_string(),
            ];
            if self.tags.sweep_value {
                rec.push(sweep_value.map_or_else(String::new, |v| v.to_string()));
            }
            if self.tags.threads {
                rec.push(threads.map_or_else(String::new, |t| t.to_string()));
            }
            self.inner.write_record(&rec)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), CliError> {
        self.inner.flush()?;
        Ok(())
    }
}

/// First trace point at which each decade `1e-1, 1e-2, ...` is reached,
/// as `(decade exponent, passes, seconds)`.
pub fn decades(out: &SolverOutput) -> Vec<(i32, f64, f64)> {
    let mut rows = Vec::new();
    for k in 1..=16 {
        let target = 10f64.powi(-k);
        match out.trace.iter().find(|r| r.suboptimality <= target) {
            Some(r) => rows.push((k, r.effective_passes, r.wall_time)),
            None => break,
        }
    }
    rows
}

/// One-line human summary: stop reason, final suboptimality, and passes and
/// seconds to each decade reached.
pub fn summary_line(label: &str, out: &SolverOutput) -> String {
    let last = out.trace.last();
    let mut s = format!(
        "{label}: stop={} passes={:.2} seconds={:.3} final_subopt={:.3e}",
        serde_json::to_value(out.stop).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
        last.map_or(0.0, |r| r.effective_passes),
        last.map_or(0.0, |r| r.wall_time),
        out.final_suboptimality(),
    );
    if let Some(tau) = out.observed_tau {
        s.push_str(&format!(" observed_tau={tau}"));
    }
    let d = decades(out);
    if !d.is_empty() {
        s.push_str(" |");
        for (k, passes, secs) in d {
            s.push_str(&format!(" 1e-{k}:{passes:.2}p/{secs:.3}s"));
        }
    }
    s
}
