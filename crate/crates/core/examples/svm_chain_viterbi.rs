//! Sequence labelling with a chain-structured SVM; the block oracle is a
//! Viterbi pass over loss-augmented scores.

use apbcfw::engine::{run_sync, BlockProblem, SolverConfig, StopRule};
use apbcfw::problems::svm_synthetic_chain;

fn main() -> apbcfw::Result<()> {
    let svm = svm_synthetic_chain(100, 8, 4, 6, 0.2, 0.01, 9)?;
    let start = svm.initial_state();
    println!("initial gap {:.4}", svm.full_gap(&start)?);

    let cfg = SolverConfig {
        tau: 10,
        seed: 5,
        stop: StopRule { max_epochs: Some(30.0), ..Default::default() },
        ..Default::default()
    };
    let r = run_sync(&svm, &cfg).map_err(|f| f.error)?;
    println!(
        "after {} iterations: gap {:.2e}, primal {:.4}",
        r.iterations,
        svm.full_gap(&r.state)?,
        svm.primal_objective(&r.state.w)
    );

    let ex = &svm.examples()[0];
    // the oracle maximizes score plus loss, so compare with the label it finds
    let y = svm.max_oracle(0, &r.state.w);
    println!("example 0 label  {:?}", ex.label);
    println!("most violating   {y:?} (loss {:.3})", svm.loss(0, &y));
    Ok(())
}
