use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, RwLock};
use std::thread;
use std::time::Instant;

use crossbeam::channel::{bounded, Receiver, Sender};
use rand::Rng;

use crate::blocks::StepSchedule;
use crate::engine::config::SolverConfig;
use crate::engine::event_sim::too_stale;
use crate::engine::monitor::Monitor;
use crate::engine::problem::BlockProblem;
use crate::engine::sync::fail;
use crate::engine::trace::{RunOutcome, StopReason};
use crate::engine::{STRAGGLER_STREAM, SUBSET_STREAM};
use crate::error::{Error, Result};
use crate::sampling::{sample_subset, stream_rng};

enum Msg<V> {
    Update { block: usize, vertex: V, birth: u64 },
    Failed { worker: usize, message: String },
}

/// Published parameters: version and snapshot.
type Published<S> = RwLock<Arc<(u64, S)>>;

fn panic_message(e: Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| e.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "worker panicked".into())
}

fn guarded<T>(f: impl FnOnce() -> Result<T>) -> std::result::Result<T, String> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(e)) => Err(e.to_string()),
        Err(panic) => Err(panic_message(panic)),
    }
}

/// Asynchronous solver on real threads.
///
/// Each worker repeatedly reads the latest published snapshot, picks a block
/// uniformly, solves its oracle and (with its return probability) sends the
/// update to the server. The server is the only writer: it drops stale
/// updates as they arrive when the drop rule is on, keeps the latest update
/// per block, and applies once `tau` distinct blocks are held. Trajectories
/// depend on scheduling and are not reproducible.
pub fn run_async_threads<P: BlockProblem>(p: &P, cfg: &SolverConfig) -> RunOutcome<P::State> {
    let n = p.num_blocks();
    let mut mon = Monitor::new(cfg, n);
    if let Err(e) = cfg.validate(n) {
        return fail(e, mon.trace);
    }
    let mut state = p.initial_state();
    let published: Published<P::Snapshot> = RwLock::new(Arc::new((0, p.snapshot(&state))));
    let stop = AtomicBool::new(false);
    let solves = AtomicU64::new(0);
    let probs = cfg.stragglers.probabilities(cfg.workers);
    let start = Instant::now();
    let outcome = thread::scope(|scope| {
        let (tx, rx) = bounded::<Msg<P::Vertex>>(4 * cfg.workers);
        for w in 0..cfg.workers {
            let tx = tx.clone();
            let (published, stop, solves, probs) = (&published, &stop, &solves, &probs);
            scope.spawn(move || async_worker(p, cfg, w, probs[w], published, stop, solves, tx));
        }
        drop(tx);
        let r = async_server(p, cfg, &mut mon, &mut state, &published, &rx, start);
        stop.store(true, Ordering::SeqCst);
        drop(rx);
        r
    });
    mon.solves = solves.load(Ordering::SeqCst);
    let clock = start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok((reason, k)) => Ok(mon.finish(state, reason, k, clock)),
        Err(e) => fail(e, mon.trace),
    }
}

#[allow(clippy::too_many_arguments)]
fn async_worker<P: BlockProblem>(
    p: &P,
    cfg: &SolverConfig,
    w: usize,
    prob: f64,
    published: &Published<P::Snapshot>,
    stop: &AtomicBool,
    solves: &AtomicU64,
    tx: Sender<Msg<P::Vertex>>,
) {
    let n = p.num_blocks();
    let mut pick = stream_rng(cfg.seed, SUBSET_STREAM + w as u64);
    let mut strag = stream_rng(cfg.seed, STRAGGLER_STREAM + w as u64);
    while !stop.load(Ordering::Relaxed) {
        let snap = published.read().map(|g| Arc::clone(&g)).unwrap_or_else(|e| Arc::clone(&e.into_inner()));
        let block = pick.random_range(0..n);
        if let Some(d) = cfg.solve_time {
            thread::sleep(d);
        }
        let vertex = match guarded(|| p.oracle(&snap.1, block)) {
            Ok(v) => v,
            Err(message) => {
                let _ = tx.send(Msg::Failed { worker: w, message });
                return;
            }
        };
        solves.fetch_add(1, Ordering::Relaxed);
        if prob < 1.0 && strag.random::<f64>() >= prob {
            continue;
        }
        if tx.send(Msg::Update { block, vertex, birth: snap.0 }).is_err() {
            return;
        }
    }
}

fn async_server<P: BlockProblem>(
    p: &P,
    cfg: &SolverConfig,
    mon: &mut Monitor,
    state: &mut P::State,
    published: &Published<P::Snapshot>,
    rx: &Receiver<Msg<P::Vertex>>,
    start: Instant,
) -> Result<(StopReason, u64)> {
    let n = p.num_blocks();
    let sched = StepSchedule::new(n, cfg.tau, cfg.step)?;
    let mut slots: Vec<Option<P::Vertex>> = (0..n).map(|_| None).collect();
    let mut order = Vec::with_capacity(cfg.tau);
    let mut k = 0u64;
    loop {
        order.clear();
        while order.len() < cfg.tau {
            match rx.recv() {
                Ok(Msg::Update { block, vertex, birth }) => {
                    if cfg.drop_rule && too_stale(k - birth, k) {
                        mon.dropped_delay += 1;
                        continue;
                    }
                    if slots[block].replace(vertex).is_some() {
                        mon.dropped_collision += 1;
                    } else {
                        order.push(block);
                    }
                }
                Ok(Msg::Failed { worker, message }) => return Err(Error::WorkerFailed { worker, message }),
                Err(_) => return Err(Error::WorkerFailed { worker: 0, message: "all workers exited".into() }),
            }
        }
        let mut gap_sum = 0.0;
        for &i in &order {
            gap_sum += p.oracle_and_gap(state, i)?.1;
        }
        let gap_est = n as f64 / order.len() as f64 * gap_sum;
        let clock = start.elapsed().as_secs_f64() * 1e3;
        if let Some(stop) = mon.observe(p, k, state, gap_est, clock)? {
            return Ok((stop, k));
        }
        let batch: Vec<(usize, P::Vertex)> = order.iter().map(|&i| (i, slots[i].take().unwrap())).collect();
        let gamma = p.step(state, &batch, cfg.step, sched.gamma(k))?;
        p.apply(state, &batch, gamma)?;
        mon.applied += batch.len() as u64;
        k += 1;
        let snap = Arc::new((k, p.snapshot(state)));
        match published.write() {
            Ok(mut g) => *g = snap,
            Err(e) => *e.into_inner() = snap,
        }
    }
}

struct Job<S> {
    snap: Arc<S>,
    blocks: Vec<usize>,
}

/// Synchronous solver on real threads: the server deals `tau / T` blocks of
/// a uniform subset to each worker and waits for all of them. A straggling
/// worker re-solves a block until it reports, so the slowest worker sets the
/// pace. The iterate sequence equals [`super::run_sync`] for the same seed.
pub fn run_sync_threads<P: BlockProblem>(p: &P, cfg: &SolverConfig) -> RunOutcome<P::State> {
    let n = p.num_blocks();
    let mut mon = Monitor::new(cfg, n);
    if let Err(e) = cfg.validate(n) {
        return fail(e, mon.trace);
    }
    let mut state = p.initial_state();
    let solves = AtomicU64::new(0);
    let probs = cfg.stragglers.probabilities(cfg.workers);
    let start = Instant::now();
    let outcome = thread::scope(|scope| {
        let (res_tx, res_rx) = bounded::<std::result::Result<Vec<(usize, P::Vertex)>, (usize, String)>>(cfg.workers);
        let mut job_txs = Vec::with_capacity(cfg.workers);
        for w in 0..cfg.workers {
            let (job_tx, job_rx) = bounded::<Job<P::Snapshot>>(1);
            job_txs.push(job_tx);
            let res_tx = res_tx.clone();
            let (solves, prob) = (&solves, probs[w]);
            scope.spawn(move || {
                let mut strag = stream_rng(cfg.seed, STRAGGLER_STREAM + w as u64);
                for job in job_rx.iter() {
                    let r = guarded(|| {
                        let mut out = Vec::with_capacity(job.blocks.len());
                        for &i in &job.blocks {
                            loop {
                                if let Some(d) = cfg.solve_time {
                                    thread::sleep(d);
                                }
                                let v = p.oracle(&job.snap, i)?;
                                solves.fetch_add(1, Ordering::Relaxed);
                                if prob >= 1.0 || strag.random::<f64>() < prob {
                                    out.push((i, v));
                                    break;
                                }
                            }
                        }
                        Ok(out)
                    });
                    if res_tx.send(r.map_err(|m| (w, m))).is_err() {
                        return;
                    }
                }
            });
        }
        drop(res_tx);
        let r = sync_server(p, cfg, &mut mon, &mut state, &job_txs, &res_rx, start);
        drop(job_txs);
        r
    });
    mon.solves = solves.load(Ordering::SeqCst);
    let clock = start.elapsed().as_secs_f64() * 1e3;
    match outcome {
        Ok((reason, k)) => Ok(mon.finish(state, reason, k, clock)),
        Err(e) => fail(e, mon.trace),
    }
}

type WorkerResult<V> = std::result::Result<Vec<(usize, V)>, (usize, String)>;

fn sync_server<P: BlockProblem>(
    p: &P,
    cfg: &SolverConfig,
    mon: &mut Monitor,
    state: &mut P::State,
    job_txs: &[Sender<Job<P::Snapshot>>],
    res_rx: &Receiver<WorkerResult<P::Vertex>>,
    start: Instant,
) -> Result<(StopReason, u64)> {
    let n = p.num_blocks();
    let t = job_txs.len();
    let sched = StepSchedule::new(n, cfg.tau, cfg.step)?;
    let mut subsets = stream_rng(cfg.seed, SUBSET_STREAM);
    let mut slots: Vec<Option<P::Vertex>> = (0..n).map(|_| None).collect();
    let mut k = 0u64;
    loop {
        let s = sample_subset(&mut subsets, n, cfg.tau);
        let snap = Arc::new(p.snapshot(state));
        let mut busy = 0;
        for (w, tx) in job_txs.iter().enumerate() {
            let blocks: Vec<usize> = s.iter().copied().skip(w).step_by(t).collect();
            if blocks.is_empty() {
                continue;
            }
            tx.send(Job { snap: Arc::clone(&snap), blocks })
                .map_err(|_| Error::WorkerFailed { worker: w, message: "worker exited".into() })?;
            busy += 1;
        }
        for _ in 0..busy {
            match res_rx.recv() {
                Ok(Ok(done)) => {
                    for (i, v) in done {
                        slots[i] = Some(v);
                    }
                }
                Ok(Err((worker, message))) => return Err(Error::WorkerFailed { worker, message }),
                Err(_) => return Err(Error::WorkerFailed { worker: 0, message: "all workers exited".into() }),
            }
        }
        let batch: Vec<(usize, P::Vertex)> = s.iter().map(|&i| (i, slots[i].take().unwrap())).collect();
        let mut gap_sum = 0.0;
        for &i in &s {
            gap_sum += p.oracle_and_gap(state, i)?.1;
        }
        let gap_est = n as f64 / s.len() as f64 * gap_sum;
        let clock = start.elapsed().as_secs_f64() * 1e3;
        if let Some(stop) = mon.observe(p, k, state, gap_est, clock)? {
            return Ok((stop, k));
        }
        let gamma = p.step(state, &batch, cfg.step, sched.gamma(k))?;
        p.apply(state, &batch, gamma)?;
        mon.applied += batch.len() as u64;
        k += 1;
    }
}
