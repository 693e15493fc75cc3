use std::collections::VecDeque;

use crate::engine::config::{SolverConfig, StopRule};
use crate::engine::problem::BlockProblem;
use crate::engine::trace::{RunResult, StopReason, Trace, TraceRecord};
use crate::error::Result;

/// Server-side telemetry and stopping checks shared by every driver.
pub(crate) struct Monitor {
    n: usize,
    tau: usize,
    workers: usize,
    seed: u64,
    stop: StopRule,
    trace_every: u64,
    full_every: Option<u64>,
    window: VecDeque<f64>,
    window_cap: usize,
    window_sum: f64,
    pushes: u64,
    pub trace: Trace,
    pub applied: u64,
    pub solves: u64,
    pub dropped_delay: u64,
    pub dropped_collision: u64,
}

impl Monitor {
    pub fn new(cfg: &SolverConfig, n: usize) -> Self {
        Self {
            n,
            tau: cfg.tau,
            workers: cfg.workers,
            seed: cfg.seed,
            stop: cfg.stop.clone(),
            trace_every: cfg.trace_every,
            full_every: cfg.full_gap_period(n),
            window: VecDeque::new(),
            window_cap: cfg.window(n),
            window_sum: 0.0,
            pushes: 0,
            trace: Trace { records: Vec::new(), config: format!("n={n} {cfg}") },
            applied: 0,
            solves: 0,
            dropped_delay: 0,
            dropped_collision: 0,
        }
    }

    pub fn epoch(&self) -> f64 {
        self.applied as f64 / self.n as f64
    }

    pub fn push_gap(&mut self, g: f64) {
        self.window.push_back(g);
        self.window_sum += g;
        if self.window.len() > self.window_cap {
            self.window_sum -= self.window.pop_front().unwrap();
        }
        self.pushes += 1;
        if self.pushes.is_multiple_of((4 * self.window_cap as u64).max(64)) {
            self.window_sum = self.window.iter().sum();
        }
    }

    pub fn gap_average(&self) -> Option<f64> {
        (self.window.len() == self.window_cap).then(|| self.window_sum / self.window_cap as f64)
    }

    /// Stop reason that does not need any evaluation of the iterate.
    pub fn pending_stop(&self, k: u64) -> Option<StopReason> {
        if let (Some(eps), Some(avg)) = (self.stop.gap_est, self.gap_average()) {
            if avg <= eps {
                return Some(StopReason::GapEstimate);
            }
        }
        if self.stop.max_iters.is_some_and(|m| k >= m) {
            return Some(StopReason::MaxIters);
        }
        if self.stop.max_epochs.is_some_and(|m| self.epoch() >= m) {
            return Some(StopReason::MaxEpochs);
        }
        None
    }

    fn full_due(&self, k: u64) -> bool {
        self.full_every.is_some_and(|e| k.is_multiple_of(e))
    }

    pub fn row_due(&self, k: u64, pending: Option<StopReason>) -> bool {
        pending.is_some() || k.is_multiple_of(self.trace_every) || self.full_due(k)
    }

    /// Appends a row for iteration `k` and applies the evaluated stop rules.
    pub fn record(
        &mut self,
        k: u64,
        gap_est: f64,
        wallclock_ms: f64,
        pending: Option<StopReason>,
        objective: impl FnOnce() -> f64,
        full_gap: impl FnOnce() -> Result<f64>,
    ) -> Result<Option<StopReason>> {
        let gap_full = if self.full_due(k) { Some(full_gap()?) } else { None };
        let primal = objective();
        self.trace.records.push(TraceRecord {
            iter: k,
            epoch: self.epoch(),
            wallclock_ms,
            primal,
            gap_est,
            gap_full,
            dropped_delay: self.dropped_delay,
            dropped_collision: self.dropped_collision,
            tau: self.tau,
            workers: self.workers,
            seed: self.seed,
            gap_est_avg: self.gap_average(),
        });
        if pending.is_some() {
            return Ok(pending);
        }
        if let (Some(eps), Some(g)) = (self.stop.full_gap, gap_full) {
            if g <= eps {
                return Ok(Some(StopReason::FullGap));
            }
        }
        if self.stop.objective_target.is_some_and(|t| primal <= t) {
            return Ok(Some(StopReason::ObjectiveTarget));
        }
        Ok(None)
    }

    /// Pushes the batch estimate, then records a row if one is due.
    pub fn observe<P: BlockProblem>(
        &mut self,
        p: &P,
        k: u64,
        state: &P::State,
        gap_est: f64,
        wallclock_ms: f64,
    ) -> Result<Option<StopReason>> {
        self.push_gap(gap_est);
        let pending = self.pending_stop(k);
        if !self.row_due(k, pending) {
            return Ok(None);
        }
        self.record(k, gap_est, wallclock_ms, pending, || p.objective(state), || p.full_gap(state))
    }

    pub fn finish<S>(self, state: S, stop: StopReason, iterations: u64, wallclock_ms: f64) -> RunResult<S> {
        RunResult {
            trace: self.trace,
            state,
            stop,
            iterations,
            applied: self.applied,
            solves: self.solves,
            dropped_delay: self.dropped_delay,
            dropped_collision: self.dropped_collision,
            wallclock_ms,
        }
    }
}
