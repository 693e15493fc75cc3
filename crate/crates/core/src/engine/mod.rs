//! Solver drivers, their configuration and telemetry.

mod collision;
mod config;
mod delay;
mod event_sim;
mod lockfree;
mod monitor;
mod norms;
mod problem;
mod sync;
mod threads;
mod trace;

pub use collision::{
    collision_expected_calls, collision_simulate, max_load_bound, max_load_simulate, within_two_tau_floor,
    CollisionStats, LoadRegime,
};
pub use config::{DelayModel, Mode, SolverConfig, StopRule, Stragglers};
pub use delay::{delay_sample, median_of_means};
pub use event_sim::{archive_window, run_async_event_sim, too_stale};
pub use lockfree::{lockfree_step, run_lockfree};
pub use norms::{
    delay_multiplier, delta_prediction, diameters, norm_constants, DelayRegime, DeltaPrediction, NormConstants,
};
pub use problem::BlockProblem;
pub use sync::run_sync;
pub use threads::{run_async_threads, run_sync_threads};
pub use trace::{RunOutcome, RunResult, SolveFailure, StopReason, Trace, TraceRecord};

use crate::blocks::ProblemSpec;
use crate::error::Error;

pub(crate) const SUBSET_STREAM: u64 = 0;
pub(crate) const DELAY_STREAM: u64 = 1 << 40;
pub(crate) const STRAGGLER_STREAM: u64 = 2 << 40;

/// Runs the driver selected by `cfg.mode`. Lock-free mode needs explicit
/// block storage; use [`solve_spec`] for it.
pub fn solve<P: BlockProblem>(p: &P, cfg: &SolverConfig) -> RunOutcome<P::State> {
    match cfg.mode {
        Mode::Sync => run_sync(p, cfg),
        Mode::AsyncEventSim => run_async_event_sim(p, cfg),
        Mode::AsyncThreads => run_async_threads(p, cfg),
        Mode::SyncThreads => run_sync_threads(p, cfg),
        Mode::LockFree => match p.as_spec() {
            Some(_) => Err(SolveFailure {
                error: Error::Unavailable("lock-free mode: call solve_spec".into()),
                trace: Trace::default(),
            }),
            None => Err(SolveFailure {
                error: Error::Unavailable("lock-free mode needs a problem with explicit blocks".into()),
                trace: Trace::default(),
            }),
        },
    }
}

/// [`solve`] for problems with explicit block storage; supports every mode.
pub fn solve_spec<P: ProblemSpec>(p: &P, cfg: &SolverConfig) -> RunOutcome<crate::blocks::BlockVector> {
    match cfg.mode {
        Mode::LockFree => run_lockfree(p, cfg),
        _ => solve(p, cfg),
    }
}
