//! Expected set curvature against its boundedness/incoherence bound, for an
//! identity quadratic, a coupled quadratic and a small fused lasso.

use apbcfw::bench::{cmd_curvature, ProblemConfig, ProblemKind};
use apbcfw::curvature::EnumerationLimits;

fn main() -> apbcfw::Result<()> {
    let limits = EnumerationLimits { max_directions: 50_000, max_subsets: 5_000, samples: 500, seed: 0 };
    let cases = [
        ProblemConfig { kind: ProblemKind::Quadratic, n: 6, d: 3, ..Default::default() },
        ProblemConfig { kind: ProblemKind::Quadratic, n: 6, d: 3, coupling: 0.8, seed: 2, ..Default::default() },
        ProblemConfig { kind: ProblemKind::Gfl, n: 10, d: 2, lambda: Some(0.5), ..Default::default() },
    ];
    for c in &cases {
        println!("{c}");
        let report = cmd_curvature(c, &[1, 2, 3, 5], &limits, 64)?;
        print!("{}", report.summary());
        println!("bounds hold: {}\n", report.bounds_hold(1e-9));
    }
    Ok(())
}
