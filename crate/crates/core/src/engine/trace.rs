use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};

/// One row of telemetry, describing the iterate at the start of iteration
/// `iter`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub iter: u64,
    /// Applied block updates divided by the block count.
    pub epoch: f64,
    pub wallclock_ms: f64,
    /// Objective value being minimized.
    pub primal: f64,
    /// Gap estimate from this iteration's batch.
    pub gap_est: f64,
    pub gap_full: Option<f64>,
    pub dropped_delay: u64,
    pub dropped_collision: u64,
    pub tau: usize,
    #[serde(rename = "T")]
    pub workers: usize,
    pub seed: u64,
    /// Moving average of `gap_est` used by the stopping rule.
    #[serde(skip)]
    pub gap_est_avg: Option<f64>,
}

/// Why a run ended.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StopReason {
    GapEstimate,
    FullGap,
    ObjectiveTarget,
    MaxIters,
    MaxEpochs,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
    /// Configuration the run used, written as a comment line.
    pub config: String,
}

impl Trace {
    pub fn last(&self) -> Option<&TraceRecord> {
        self.records.last()
    }

    /// Writes `# <config>` followed by the CSV header and rows.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# {}", self.config)?;
        let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(out);
        if self.records.is_empty() {
            w.write_record([
                "iter",
                "epoch",
                "wallclock_ms",
                "primal",
                "gap_est",
                "gap_full",
                "dropped_delay",
                "dropped_collision",
                "tau",
                "T",
                "seed",
            ])?;
        }
        for r in &self.records {
            w.serialize(r)?;
        }
        w.flush().map_err(Error::from)
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        String::from_utf8(buf).map_err(|e| Error::Data(e.to_string()))
    }
}

/// Outcome of a completed run.
#[derive(Clone, Debug)]
pub struct RunResult<S> {
    pub trace: Trace,
    pub state: S,
    pub stop: StopReason,
    /// Server iterations performed.
    pub iterations: u64,
    /// Block updates applied.
    pub applied: u64,
    /// Oracle calls made, including discarded ones.
    pub solves: u64,
    pub dropped_delay: u64,
    pub dropped_collision: u64,
    /// Wall-clock (real or simulated) in milliseconds.
    pub wallclock_ms: f64,
}

impl<S> RunResult<S> {
    pub fn epochs(&self, n: usize) -> f64 {
        self.applied as f64 / n as f64
    }
}

/// A run that stopped on an error, with the telemetry gathered so far.
#[derive(Debug)]
pub struct SolveFailure {
    pub error: Error,
    pub trace: Trace,
}

impl std::fmt::Display for SolveFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} (after {} trace rows)", self.error, self.trace.records.len())
    }
}

impl std::error::Error for SolveFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl From<SolveFailure> for Error {
    fn from(f: SolveFailure) -> Self {
        f.error
    }
}

pub type RunOutcome<S> = std::result::Result<RunResult<S>, SolveFailure>;

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let t = Trace {
            records: vec![TraceRecord {
                iter: 0,
                epoch: 0.0,
                wallclock_ms: 0.0,
                primal: 1.5,
                gap_est: 0.25,
                gap_full: None,
                dropped_delay: 0,
                dropped_collision: 2,
                tau: 1,
                workers: 4,
                seed: 9,
                gap_est_avg: Some(0.3),
            }],
            config: "mode=sync".into(),
        };
        let s = t.to_csv_string().unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines[0], "# mode=sync");
        assert_eq!(
            lines[1],
            "iter,epoch,wallclock_ms,primal,gap_est,gap_full,dropped_delay,dropped_collision,tau,T,seed"
        );
        assert_eq!(lines[2], "0,0.0,0.0,1.5,0.25,,0,2,1,4,9");
    }
}
