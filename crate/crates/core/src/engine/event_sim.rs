use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;

use crate::blocks::StepSchedule;
use crate::engine::config::SolverConfig;
use crate::engine::delay::delay_sample;
use crate::engine::monitor::Monitor;
use crate::engine::problem::BlockProblem;
use crate::engine::sync::fail;
use crate::engine::trace::{RunOutcome, StopReason};
use crate::engine::{DELAY_STREAM, STRAGGLER_STREAM, SUBSET_STREAM};
use crate::error::{Error, Result};
use crate::sampling::stream_rng;

/// Snapshots kept for stale reads: `max(64, 4 kappa, k / 2 + 1)`.
pub fn archive_window(kappa: f64, k: u64) -> usize {
    64usize.max((4.0 * kappa).ceil() as usize).max((k / 2 + 1) as usize)
}

/// Whether an update of this delay is discarded at iteration `k`.
pub fn too_stale(delay: u64, k: u64) -> bool {
    2 * delay > k
}

/// Seeded discrete-event simulation of the asynchronous server.
///
/// Arrivals pick a block uniformly and carry a delay drawn from the delay
/// model; the update is computed from the archived iterate of that age
/// (clipped at iteration 0). The server holds the latest arrival per block
/// and, once `tau` distinct blocks are held, applies them and advances the
/// iteration. With the drop rule on, held updates older than `k / 2` are
/// discarded at that point; the iteration still advances, possibly with an
/// empty batch. The clock is simulated: solves divided by `T`, in units of
/// the configured solve time.
pub fn run_async_event_sim<P: BlockProblem>(p: &P, cfg: &SolverConfig) -> RunOutcome<P::State> {
    let n = p.num_blocks();
    let mut mon = Monitor::new(cfg, n);
    if let Err(e) = cfg.validate(n) {
        return fail(e, mon.trace);
    }
    let mut state = p.initial_state();
    match sim_loop(p, cfg, &mut mon, &mut state) {
        Ok((stop, k, clock)) => Ok(mon.finish(state, stop, k, clock)),
        Err(e) => fail(e, mon.trace),
    }
}

struct Held {
    birth: u64,
}

fn sim_loop<P: BlockProblem>(
    p: &P,
    cfg: &SolverConfig,
    mon: &mut Monitor,
    state: &mut P::State,
) -> Result<(StopReason, u64, f64)> {
    let n = p.num_blocks();
    let sched = StepSchedule::new(n, cfg.tau, cfg.step)?;
    let mut blocks_rng = stream_rng(cfg.seed, SUBSET_STREAM);
    let mut delay_rng = stream_rng(cfg.seed, DELAY_STREAM);
    let mut strag = stream_rng(cfg.seed, STRAGGLER_STREAM);
    let probs = cfg.stragglers.probabilities(cfg.workers);
    let unit = cfg.solve_unit_ms();
    let kappa = cfg.delay.kappa();

    let mut archive: VecDeque<Arc<P::Snapshot>> = VecDeque::new();
    let mut base = 0u64;
    archive.push_back(Arc::new(p.snapshot(state)));

    let mut slots: Vec<Option<Held>> = (0..n).map(|_| None).collect();
    let mut order: Vec<usize> = Vec::with_capacity(cfg.tau);
    let mut arrivals = 0u64;
    let mut k = 0u64;
    loop {
        order.clear();
        while order.len() < cfg.tau {
            let i = blocks_rng.random_range(0..n);
            let worker = (arrivals % cfg.workers as u64) as usize;
            arrivals += 1;
            mon.solves += 1;
            if probs[worker] < 1.0 && strag.random::<f64>() >= probs[worker] {
                continue;
            }
            let delay = delay_sample(&cfg.delay, &mut delay_rng).min(k);
            if slots[i].replace(Held { birth: k - delay }).is_some() {
                mon.dropped_collision += 1;
            } else {
                order.push(i);
            }
        }
        let clock = mon.solves as f64 / cfg.workers as f64 * unit;
        let mut gap_sum = 0.0;
        for &i in &order {
            gap_sum += p.oracle_and_gap(state, i)?.1;
        }
        let gap_est = n as f64 / order.len() as f64 * gap_sum;
        if let Some(stop) = mon.observe(p, k, state, gap_est, clock)? {
            return Ok((stop, k, clock));
        }
        let mut batch = Vec::with_capacity(order.len());
        for &i in &order {
            let held = slots[i].take().unwrap();
            let delay = k - held.birth;
            if cfg.drop_rule && too_stale(delay, k) {
                mon.dropped_delay += 1;
                continue;
            }
            if held.birth < base {
                return Err(Error::ArchiveExhausted { delay, window: archive.len() });
            }
            let snap = &archive[(held.birth - base) as usize];
            batch.push((i, p.oracle(snap, i)?));
        }
        if !batch.is_empty() {
            let gamma = p.step(state, &batch, cfg.step, sched.gamma(k))?;
            p.apply(state, &batch, gamma)?;
            mon.applied += batch.len() as u64;
        }
        k += 1;
        archive.push_back(Arc::new(p.snapshot(state)));
        let window = archive_window(kappa, k);
        while archive.len() > window {
            archive.pop_front();
            base += 1;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drop_threshold() {
        // delay k/2 + 1 is dropped, k/2 is kept
        assert!(too_stale(51, 100));
        assert!(!too_stale(50, 100));
        assert!(too_stale(1, 1));
        assert!(!too_stale(0, 0));
    }

    #[test]
    fn window_size() {
        assert_eq!(archive_window(0.0, 0), 64);
        assert_eq!(archive_window(20.0, 10), 80);
        assert_eq!(archive_window(1.0, 1000), 501);
    }
}
