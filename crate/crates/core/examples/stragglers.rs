//! Wall-clock cost of a slow worker for the synchronous and asynchronous
//! threaded servers. Oracle calls are padded to a fixed duration.

use std::time::Duration;

use apbcfw::bench::{cmd_straggler, ProblemConfig, ProblemKind, StragglerGrid, StragglerSpec};
use apbcfw::engine::{Mode, SolverConfig};

fn main() -> apbcfw::Result<()> {
    let problem = ProblemConfig { kind: ProblemKind::Gfl, n: 64, d: 4, lambda: Some(0.1), ..Default::default() };
    let spec = StragglerSpec { grid: StragglerGrid::Single(vec![0.5, 0.2]), runs: 3, epochs: 4.0 };
    for mode in [Mode::SyncThreads, Mode::AsyncThreads] {
        let solver = SolverConfig {
            tau: 8,
            workers: 8,
            mode,
            solve_time: Some(Duration::from_micros(200)),
            ..Default::default()
        };
        let r = cmd_straggler(&problem, &solver, &spec)?;
        println!("{}", mode.name());
        for (p, slowdown) in &r.normalized {
            println!("  p={p:?}: time per pass x{slowdown:.2}");
        }
    }
    Ok(())
}
