use rand::Rng;

use crate::blocks::StepSchedule;
use crate::engine::config::SolverConfig;
use crate::engine::monitor::Monitor;
use crate::engine::problem::BlockProblem;
use crate::engine::trace::{RunOutcome, SolveFailure, StopReason, Trace};
use crate::engine::{STRAGGLER_STREAM, SUBSET_STREAM};
use crate::error::Result;
use crate::sampling::{sample_subset, stream_rng};

/// Number of solves until a worker with return probability `p` reports.
pub(crate) fn attempts<R: Rng + ?Sized>(p: f64, rng: &mut R) -> u64 {
    if p >= 1.0 {
        return 1;
    }
    let mut k = 1;
    while rng.random::<f64>() >= p {
        k += 1;
    }
    k
}

pub(crate) fn fail<S>(error: crate::Error, trace: Trace) -> RunOutcome<S> {
    Err(SolveFailure { error, trace })
}

/// Synchronous mini-batch solver.
///
/// Every iteration draws a uniform subset of `tau` blocks, solves all of
/// their oracles at the current iterate and applies them together. The
/// blocks are dealt round-robin to `T` simulated workers; the simulated clock
/// advances by the slowest worker's solve count, stragglers included.
pub fn run_sync<P: BlockProblem>(p: &P, cfg: &SolverConfig) -> RunOutcome<P::State> {
    let n = p.num_blocks();
    let mut mon = Monitor::new(cfg, n);
    if let Err(e) = cfg.validate(n) {
        return fail(e, mon.trace);
    }
    let mut state = p.initial_state();
    match sync_loop(p, cfg, &mut mon, &mut state) {
        Ok((stop, k, clock)) => Ok(mon.finish(state, stop, k, clock)),
        Err(e) => fail(e, mon.trace),
    }
}

fn sync_loop<P: BlockProblem>(
    p: &P,
    cfg: &SolverConfig,
    mon: &mut Monitor,
    state: &mut P::State,
) -> Result<(StopReason, u64, f64)> {
    let n = p.num_blocks();
    let sched = StepSchedule::new(n, cfg.tau, cfg.step)?;
    let mut subsets = stream_rng(cfg.seed, SUBSET_STREAM);
    let mut strag = stream_rng(cfg.seed, STRAGGLER_STREAM);
    let probs = cfg.stragglers.probabilities(cfg.workers);
    let unit = cfg.solve_unit_ms();
    let mut clock = 0.0;
    let mut per_worker = vec![0u64; cfg.workers];
    let mut k = 0u64;
    loop {
        let s = sample_subset(&mut subsets, n, cfg.tau);
        let mut batch = Vec::with_capacity(s.len());
        let mut gap_sum = 0.0;
        for &i in &s {
            let (v, g) = p.oracle_and_gap(state, i)?;
            gap_sum += g;
            batch.push((i, v));
        }
        per_worker.iter_mut().for_each(|c| *c = 0);
        for j in 0..s.len() {
            let w = j % cfg.workers;
            per_worker[w] += attempts(probs[w], &mut strag);
        }
        mon.solves += per_worker.iter().sum::<u64>();
        let gap_est = n as f64 / s.len() as f64 * gap_sum;
        if let Some(stop) = mon.observe(p, k, state, gap_est, clock)? {
            return Ok((stop, k, clock));
        }
        clock += *per_worker.iter().max().unwrap() as f64 * unit;
        let gamma = p.step(state, &batch, cfg.step, sched.gamma(k))?;
        p.apply(state, &batch, gamma)?;
        mon.applied += batch.len() as u64;
        k += 1;
    }
}
