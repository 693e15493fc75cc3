//! Change-point recovery with the group fused lasso: solve the dual, map
//! back to a piecewise-constant signal and report where it jumps.

use apbcfw::blocks::ProblemSpec;
use apbcfw::engine::{run_sync, SolverConfig, StopRule};
use apbcfw::problems::gfl_synthetic;

fn main() -> apbcfw::Result<()> {
    let p = gfl_synthetic(4, 200, 4, 0.3, 2.0, 7)?;
    let cfg = SolverConfig {
        tau: 16,
        seed: 1,
        full_gap_every: Some(20),
        stop: StopRule { full_gap: Some(0.05), max_iters: Some(500_000), ..Default::default() },
        ..Default::default()
    };
    let r = run_sync(&p, &cfg).map_err(|f| f.error)?;
    println!("stopped by {:?} after {} iterations", r.stop, r.iterations);
    println!("primal {:.5}, dual {:.5}", p.primal_value(&r.state).unwrap(), p.dual_value(&r.state));

    let x = p.primal_recover(&r.state);
    let jumps: Vec<(usize, f64)> =
        (0..x.ncols() - 1).map(|t| (t, (x.column(t + 1) - x.column(t)).norm())).filter(|(_, j)| *j > 1e-2).collect();
    let truth: Vec<usize> = match &p.segments {
        Some(s) => s.windows(2).enumerate().filter(|(_, w)| w[0] != w[1]).map(|(t, _)| t).collect(),
        None => Vec::new(),
    };
    println!("true change points: {truth:?}");
    // small jumps around the true changes are shrinkage, the large ones line up
    let mut big = jumps.clone();
    big.sort_by(|a, b| b.1.total_cmp(&a.1));
    big.truncate(truth.len());
    big.sort_by_key(|j| j.0);
    println!("largest recovered jumps: {:?}", big.iter().map(|(t, j)| format!("{t}:{j:.2}")).collect::<Vec<_>>());
    Ok(())
}
