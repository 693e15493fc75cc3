use std::fmt;
use std::time::Duration;

use crate::blocks::{check_batch, StepMode};
use crate::error::{Error, Result};

/// Which driver runs the solve.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Mode {
    /// Mini-batch solver, all oracles at the current iterate.
    #[default]
    Sync,
    /// Seeded discrete-event simulation of a server with delayed workers.
    AsyncEventSim,
    /// Real worker threads sending updates to a single applier.
    AsyncThreads,
    /// Real worker threads, with the server waiting for every assigned block.
    SyncThreads,
    /// Shared-memory workers writing blocks directly, batch size one.
    LockFree,
}

impl Mode {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "sync" => Mode::Sync,
            "async-event-sim" | "event-sim" => Mode::AsyncEventSim,
            "async-threads" | "async" => Mode::AsyncThreads,
            "sync-threads" => Mode::SyncThreads,
            "lockfree" | "lock-free" => Mode::LockFree,
            _ => return Err(Error::InvalidConfig(format!("unknown mode {s:?}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            Mode::Sync => "sync",
            Mode::AsyncEventSim => "async-event-sim",
            Mode::AsyncThreads => "async-threads",
            Mode::SyncThreads => "sync-threads",
            Mode::LockFree => "lockfree",
        }
    }

    /// Whether runs in this mode depend on thread scheduling.
    pub fn is_nondeterministic(&self) -> bool {
        matches!(self, Mode::AsyncThreads | Mode::LockFree)
    }
}

/// Distribution of the staleness of each update, in server iterations.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum DelayModel {
    #[default]
    None,
    Poisson {
        kappa: f64,
    },
    /// Pareto with shape 2 and scale `kappa / 2`, rounded to the nearest
    /// integer; mean `kappa`, infinite variance.
    Pareto {
        kappa: f64,
    },
}

impl DelayModel {
    pub fn kappa(&self) -> f64 {
        match self {
            DelayModel::None => 0.0,
            DelayModel::Poisson { kappa } | DelayModel::Pareto { kappa } => *kappa,
        }
    }
}

/// Return probabilities of the workers: after each solve a worker reports
/// with its probability and otherwise discards the result.
#[derive(Clone, Debug, PartialEq, Default)]
pub enum Stragglers {
    #[default]
    None,
    /// Worker 0 reports with probability `p`, the others always.
    Single {
        p: f64,
    },
    PerWorker(Vec<f64>),
    /// `p_i = min(1, theta + i / T)` for workers `i = 1..=T`.
    Heterogeneous {
        theta: f64,
    },
}

impl Stragglers {
    /// Return probability of every worker.
    pub fn probabilities(&self, workers: usize) -> Vec<f64> {
        match self {
            Stragglers::None => vec![1.0; workers],
            Stragglers::Single { p } => {
                let mut v = vec![1.0; workers];
                v[0] = *p;
                v
            }
            Stragglers::PerWorker(v) => v.clone(),
            Stragglers::Heterogeneous { theta } => {
                (1..=workers).map(|i| (theta + i as f64 / workers as f64).min(1.0)).collect()
            }
        }
    }
}

/// When to stop. The first rule that triggers ends the run.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct StopRule {
    /// Moving average of the batch gap estimate at or below this value.
    pub gap_est: Option<f64>,
    /// Full gap (when evaluated) at or below this value.
    pub full_gap: Option<f64>,
    /// Objective (when evaluated) at or below this value.
    pub objective_target: Option<f64>,
    pub max_iters: Option<u64>,
    /// Block solves applied, divided by the block count.
    pub max_epochs: Option<f64>,
}

impl StopRule {
    pub fn iterations(k: u64) -> Self {
        Self { max_iters: Some(k), ..Default::default() }
    }

    pub fn is_empty(&self) -> bool {
        self.gap_est.is_none()
            && self.full_gap.is_none()
            && self.objective_target.is_none()
            && self.max_iters.is_none()
            && self.max_epochs.is_none()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SolverConfig {
    pub tau: usize,
    pub workers: usize,
    pub mode: Mode,
    pub step: StepMode,
    pub delay: DelayModel,
    pub stragglers: Stragglers,
    /// Discard updates whose delay exceeds `k / 2` at iteration `k`.
    pub drop_rule: bool,
    pub stop: StopRule,
    pub seed: u64,
    /// Evaluate the full gap every this many iterations; `None` picks
    /// `ceil(n / tau)` when `n <= 10^4` and never otherwise.
    pub full_gap_every: Option<u64>,
    /// Record a trace row (and evaluate the objective) every this many
    /// iterations.
    pub trace_every: u64,
    /// Iterations in the gap-estimate moving average; `None` picks
    /// `ceil(n / tau)`.
    pub gap_window: Option<usize>,
    /// Time one oracle call is taken to last. Threaded modes sleep for it;
    /// simulated clocks count it. Defaults to one millisecond of simulated
    /// time and no sleeping.
    pub solve_time: Option<Duration>,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            tau: 1,
            workers: 1,
            mode: Mode::Sync,
            step: StepMode::Schedule,
            delay: DelayModel::None,
            stragglers: Stragglers::None,
            drop_rule: false,
            stop: StopRule::default(),
            seed: 0,
            full_gap_every: None,
            trace_every: 1,
            gap_window: None,
            solve_time: None,
        }
    }
}

impl SolverConfig {
    pub fn new(tau: usize, stop: StopRule) -> Self {
        Self { tau, stop, ..Default::default() }
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        check_batch(n, self.tau)?;
        if self.workers == 0 {
            return Err(Error::InvalidConfig("need at least one worker".into()));
        }
        let kappa = self.delay.kappa();
        if !(kappa >= 0.0 && kappa.is_finite()) {
            return Err(Error::InvalidConfig(format!("expected delay {kappa} must be >= 0")));
        }
        let probs = self.stragglers.probabilities(self.workers);
        if probs.len() != self.workers {
            return Err(Error::InvalidConfig(format!(
                "{} return probabilities for {} workers",
                probs.len(),
                self.workers
            )));
        }
        if let Stragglers::Heterogeneous { theta } = self.stragglers {
            if !(theta >= 0.0) {
                return Err(Error::InvalidConfig(format!("theta {theta} must be >= 0")));
            }
        }
        if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && **p <= 1.0)) {
            return Err(Error::InvalidConfig(format!("return probability {p} outside (0, 1]")));
        }
        if self.stop.is_empty() {
            return Err(Error::InvalidConfig("no stopping rule".into()));
        }
        if self.trace_every == 0 || self.full_gap_every == Some(0) || self.gap_window == Some(0) {
            return Err(Error::InvalidConfig("evaluation periods must be positive".into()));
        }
        if self.mode == Mode::LockFree && self.tau != 1 {
            return Err(Error::InvalidConfig("lock-free mode requires tau = 1".into()));
        }
        Ok(())
    }

    pub(crate) fn window(&self, n: usize) -> usize {
        self.gap_window.unwrap_or_else(|| n.div_ceil(self.tau.max(1)))
    }

    pub(crate) fn full_gap_period(&self, n: usize) -> Option<u64> {
        match self.full_gap_every {
            Some(k) => Some(k),
            None if n <= 10_000 => Some(n.div_ceil(self.tau.max(1)) as u64),
            None => None,
        }
    }

    pub(crate) fn solve_unit_ms(&self) -> f64 {
        self.solve_time.map(|d| d.as_secs_f64() * 1e3).unwrap_or(1.0)
    }
}

impl fmt::Display for SolverConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "mode={} tau={} workers={} step={:?} delay={:?} stragglers={:?} drop_rule={} stop={:?} seed={} full_gap_every={:?} trace_every={} gap_window={:?} solve_time={:?}",
            self.mode.name(),
            self.tau,
            self.workers,
            self.step,
            self.delay,
            self.stragglers,
            self.drop_rule,
            self.stop,
            self.seed,
            self.full_gap_every,
            self.trace_every,
            self.gap_window,
            self.solve_time
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn validation() {
        let ok = SolverConfig::new(2, StopRule::iterations(10));
        ok.validate(5).unwrap();
        assert!(SolverConfig { tau: 6, ..ok.clone() }.validate(5).is_err());
        assert!(SolverConfig { workers: 0, ..ok.clone() }.validate(5).is_err());
        assert!(SolverConfig { delay: DelayModel::Poisson { kappa: -1.0 }, ..ok.clone() }.validate(5).is_err());
        assert!(SolverConfig { stragglers: Stragglers::Single { p: 0.0 }, ..ok.clone() }.validate(5).is_err());
        assert!(SolverConfig { stop: StopRule::default(), ..ok.clone() }.validate(5).is_err());
        assert!(SolverConfig { mode: Mode::LockFree, ..ok.clone() }.validate(5).is_err());
    }

    #[test]
    fn heterogeneous_probabilities() {
        let p = Stragglers::Heterogeneous { theta: 0.0 }.probabilities(4);
        assert_eq!(p, vec![0.25, 0.5, 0.75, 1.0]);
        let p = Stragglers::Heterogeneous { theta: 1.0 }.probabilities(4);
        assert!(p.iter().all(|v| *v == 1.0));
    }
}
