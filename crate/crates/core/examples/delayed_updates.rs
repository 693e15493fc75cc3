//! Simulated parameter server with stale updates. Iterations to a gap target
//! grow slowly with the expected delay; heavy tails need the drop rule.

use apbcfw::bench::{cmd_delay, DelayDist, DelaySpec, ProblemConfig, ProblemKind};
use apbcfw::engine::SolverConfig;

fn main() -> apbcfw::Result<()> {
    let problem = ProblemConfig { kind: ProblemKind::Gfl, n: 100, d: 5, lambda: Some(0.1), ..Default::default() };
    let solver = SolverConfig { tau: 10, drop_rule: true, ..Default::default() };
    for dist in [DelayDist::Poisson, DelayDist::Pareto] {
        let spec = DelaySpec {
            kappas: vec![0.0, 5.0, 10.0, 20.0],
            dist,
            seeds: (0..5).collect(),
            threshold: 0.1,
            max_iters: 1_000_000,
        };
        let r = cmd_delay(&problem, &solver, &spec)?;
        println!("{dist:?}");
        for (kappa, median, ratio) in &r.summary {
            println!("  kappa={kappa:>4}: median iterations {median:?}, ratio {ratio:.3?}");
        }
    }
    Ok(())
}
