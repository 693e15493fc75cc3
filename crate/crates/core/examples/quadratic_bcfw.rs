//! Mini-batch block-coordinate Frank-Wolfe on a coupled quadratic over a
//! product of simplices, compared against the exact minimum.

use apbcfw::blocks::{full_gap, ProblemSpec, StepMode};
use apbcfw::engine::{run_sync, SolverConfig, StopRule};
use apbcfw::problems::random_coupled;

fn main() -> apbcfw::Result<()> {
    let p = random_coupled(6, 3, 0.5, 1)?;
    let (fstar, _) = p.exact_minimum(1 << 20)?;
    println!("f* = {fstar:.8}");

    for (tau, step) in [(1, StepMode::Schedule), (3, StepMode::Schedule), (6, StepMode::LineSearch)] {
        let cfg = SolverConfig { tau, step, seed: 3, stop: StopRule::iterations(400), ..Default::default() };
        let r = run_sync(&p, &cfg).map_err(|f| f.error)?;
        let f = p.objective(&r.state);
        println!(
            "tau={tau} {step:?}: f - f* = {:.3e}, full gap = {:.3e}, epochs = {:.1}",
            f - fstar,
            full_gap(&p, &r.state)?,
            r.epochs(p.num_blocks())
        );
    }
    Ok(())
}
