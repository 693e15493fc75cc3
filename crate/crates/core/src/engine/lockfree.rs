use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Mutex, RwLock};
use std::thread;
use std::time::Instant;

use rand::Rng;

use crate::blocks::{gap_term, BlockVector, ProblemSpec};
use crate::engine::config::SolverConfig;
use crate::engine::monitor::Monitor;
use crate::engine::sync::fail;
use crate::engine::trace::{RunOutcome, StopReason};
use crate::engine::SUBSET_STREAM;
use crate::error::{Error, Result};
use crate::sampling::stream_rng;

/// `2n / (k + 2n)`, the single-block step used by the lock-free driver.
pub fn lockfree_step(k: u64, n: usize) -> f64 {
    let n = n as f64;
    2.0 * n / (k as f64 + 2.0 * n)
}

struct Shared {
    blocks: Vec<RwLock<Vec<f64>>>,
    counter: AtomicU64,
    stop: AtomicBool,
    error: Mutex<Option<Error>>,
}

impl Shared {
    fn read_block(&self, i: usize) -> Vec<f64> {
        match self.blocks[i].read() {
            Ok(g) => g.clone(),
            Err(e) => e.into_inner().clone(),
        }
    }

    fn gather(&self, version: u64) -> BlockVector {
        let mut x = BlockVector::from_blocks((0..self.blocks.len()).map(|i| self.read_block(i)).collect());
        x.set_version(version);
        x
    }

    fn abort(&self, e: Error) {
        let mut slot = self.error.lock().unwrap_or_else(|p| p.into_inner());
        slot.get_or_insert(e);
        self.stop.store(true, Ordering::SeqCst);
    }
}

/// Lock-free single-block solver on `T` threads.
///
/// Workers share the iterate block by block. Each one picks a block
/// uniformly, refreshes the blocks its partial gradient depends on, solves
/// the oracle, takes a ticket `k` from the shared counter and writes
/// `(1 - gamma) x_i + gamma s` under that block's lock with
/// `gamma = 2n / (k + 2n)`. Telemetry rows are recorded whenever a ticket is
/// due; their primal values read the shared blocks at that moment. With
/// `T = 1` the run follows [`super::run_sync`] with `tau = 1`.
pub fn run_lockfree(p: &dyn ProblemSpec, cfg: &SolverConfig) -> RunOutcome<BlockVector> {
    let n = p.num_blocks();
    let mon = Monitor::new(cfg, n);
    if let Err(e) = cfg.validate(n) {
        return fail(e, mon.trace);
    }
    if cfg.tau != 1 {
        return fail(Error::InvalidConfig("lock-free mode requires tau = 1".into()), mon.trace);
    }
    let x0 = p.initial_point();
    let shared = Shared {
        blocks: x0.blocks().map(|b| RwLock::new(b.to_vec())).collect(),
        counter: AtomicU64::new(0),
        stop: AtomicBool::new(false),
        error: Mutex::new(None),
    };
    let mon = Mutex::new(mon);
    let reason: Mutex<Option<(StopReason, u64)>> = Mutex::new(None);
    let start = Instant::now();
    thread::scope(|scope| {
        for w in 0..cfg.workers {
            let (shared, mon, reason, x0) = (&shared, &mon, &reason, &x0);
            scope.spawn(move || {
                if let Err(e) = worker(p, cfg, w, shared, mon, reason, x0.clone(), start) {
                    shared.abort(e);
                }
            });
        }
    });
    let clock = start.elapsed().as_secs_f64() * 1e3;
    let mut mon = mon.into_inner().unwrap_or_else(|e| e.into_inner());
    mon.trace.records.sort_by_key(|r| r.iter);
    let k_final = shared.counter.load(Ordering::SeqCst);
    if let Some(e) = shared.error.into_inner().unwrap_or_else(|e| e.into_inner()) {
        return fail(e, mon.trace);
    }
    let mut state = BlockVector::from_blocks(
        shared.blocks.into_iter().map(|b| b.into_inner().unwrap_or_else(|e| e.into_inner())).collect(),
    );
    state.set_version(mon.applied);
    let (stop, k) = reason.into_inner().unwrap_or_else(|e| e.into_inner()).unwrap_or((StopReason::MaxIters, k_final));
    Ok(mon.finish(state, stop, k, clock))
}

#[allow(clippy::too_many_arguments)]
fn worker(
    p: &dyn ProblemSpec,
    cfg: &SolverConfig,
    w: usize,
    shared: &Shared,
    mon: &Mutex<Monitor>,
    reason: &Mutex<Option<(StopReason, u64)>>,
    mut local: BlockVector,
    start: Instant,
) -> Result<()> {
    let n = p.num_blocks();
    let domains = p.domains();
    let mut rng = stream_rng(cfg.seed, SUBSET_STREAM + w as u64);
    while !shared.stop.load(Ordering::SeqCst) {
        let i = rng.random_range(0..n);
        match p.gradient_dependencies(i) {
            Some(deps) => {
                for j in deps {
                    local.block_mut(j).copy_from_slice(&shared.read_block(j));
                }
            }
            None => {
                for j in 0..n {
                    local.block_mut(j).copy_from_slice(&shared.read_block(j));
                }
            }
        }
        if cfg.solve_time.is_some_and(|d| !d.is_zero()) {
            thread::sleep(cfg.solve_time.unwrap());
        }
        let g = p.gradient_block(&local, i);
        let s = p.lmo(i, &g)?;
        let gap_est = n as f64 * gap_term(local.block(i), &s, &g);

        let mut m = mon.lock().unwrap_or_else(|e| e.into_inner());
        if shared.stop.load(Ordering::SeqCst) {
            break;
        }
        let k = shared.counter.load(Ordering::SeqCst);
        m.push_gap(gap_est);
        let pending = m.pending_stop(k);
        if m.row_due(k, pending) {
            let x = shared.gather(k);
            let clock = start.elapsed().as_secs_f64() * 1e3;
            let stop = m.record(k, gap_est, clock, pending, || p.objective(&x), || crate::blocks::full_gap(p, &x))?;
            if let Some(stop) = stop {
                *reason.lock().unwrap_or_else(|e| e.into_inner()) = Some((stop, k));
                shared.stop.store(true, Ordering::SeqCst);
                break;
            }
        }
        let k = shared.counter.fetch_add(1, Ordering::SeqCst);
        m.applied += 1;
        m.solves += 1;
        drop(m);

        let gamma = lockfree_step(k, n);
        let mut b = shared.blocks[i].write().unwrap_or_else(|e| e.into_inner());
        for (v, sv) in b.iter_mut().zip(&s) {
            *v = (1.0 - gamma) * *v + gamma * sv;
        }
        domains[i].repair(i, &mut b)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn step_values() {
        assert_eq!(lockfree_step(0, 7), 1.0);
        for k in 0..1000 {
            let g = lockfree_step(k, 7);
            assert!(g > 0.0 && g <= 1.0);
        }
        assert!((lockfree_step(14, 7) - 0.5).abs() < 1e-15);
    }
}
