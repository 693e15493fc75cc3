//! Multiclass SVM trained through its dual with batched block updates.

use apbcfw::engine::{run_sync, BlockProblem, SolverConfig, StopRule};
use apbcfw::problems::svm_synthetic_multiclass;

fn main() -> apbcfw::Result<()> {
    let svm = svm_synthetic_multiclass(200, 5, 10, 0.01, 4)?;
    for tau in [1, 10, 50] {
        let cfg = SolverConfig {
            tau,
            seed: 2,
            stop: StopRule { max_epochs: Some(20.0), ..Default::default() },
            ..Default::default()
        };
        let r = run_sync(&svm, &cfg).map_err(|f| f.error)?;
        let w = &r.state.w;
        let errors = (0..svm.num_examples())
            .filter(|&i| {
                let ex = &svm.examples()[i];
                // prediction: highest score without the loss term
                let scores: Vec<f64> =
                    (0..5).map(|c| svm.joint_feature(i, &[c]).iter().zip(w).map(|(a, b)| a * b).sum()).collect();
                let best = (0..5).max_by(|&a, &b| scores[a].total_cmp(&scores[b])).unwrap();
                best != ex.label[0]
            })
            .count();
        println!(
            "tau={tau:>2}: primal {:.4}, duality gap {:.2e}, training error {:.1}%",
            svm.primal_objective(w),
            svm.full_gap(&r.state)?,
            100.0 * errors as f64 / svm.num_examples() as f64
        );
    }

    // same run, also reporting the weighted average of the iterates
    let avg = svm.clone().with_averaging(true);
    let cfg = SolverConfig {
        tau: 10,
        seed: 2,
        stop: StopRule { max_epochs: Some(20.0), ..Default::default() },
        ..Default::default()
    };
    let r = run_sync(&avg, &cfg).map_err(|f| f.error)?;
    println!(
        "tau=10 averaged: primal {:.4} (last iterate {:.4})",
        avg.primal_objective(r.state.weights()),
        avg.primal_objective(&r.state.w)
    );
    Ok(())
}
