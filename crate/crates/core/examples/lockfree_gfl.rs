//! Shared-memory workers writing group fused lasso blocks in place. Each
//! oracle call is padded to 50us so the workers interleave on any machine.

use std::time::Duration;

use apbcfw::blocks::{full_gap, ProblemSpec};
use apbcfw::engine::{run_lockfree, run_sync, Mode, SolverConfig, StopRule};
use apbcfw::problems::gfl_synthetic;

fn main() -> apbcfw::Result<()> {
    let p = gfl_synthetic(5, 100, 5, 0.5, 0.1, 3)?;
    let stop = StopRule { gap_est: Some(0.05), max_iters: Some(5_000_000), ..Default::default() };
    let solve_time = Some(Duration::from_micros(50));
    let sync = run_sync(&p, &SolverConfig { stop: stop.clone(), trace_every: 100, solve_time, ..Default::default() })
        .map_err(|f| f.error)?;
    println!("sync tau=1: {} iterations, {:.1} ms simulated", sync.iterations, sync.wallclock_ms);
    for workers in [2, 4, 8] {
        let cfg = SolverConfig {
            workers,
            mode: Mode::LockFree,
            stop: stop.clone(),
            trace_every: 100,
            solve_time,
            ..Default::default()
        };
        let r = run_lockfree(&p, &cfg).map_err(|f| f.error)?;
        println!(
            "lock-free T={workers}: {} iterations, {:.1} ms, full gap {:.3e}, objective {:.5}",
            r.iterations,
            r.wallclock_ms,
            full_gap(&p, &r.state)?,
            p.objective(&r.state)
        );
    }
    Ok(())
}
