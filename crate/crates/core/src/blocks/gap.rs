use crate::blocks::{BlockVector, ProblemSpec};
use crate::error::{Error, Result};

/// Gap estimate computed from a subset of blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct GapEstimate {
    pub value: f64,
    pub subset: Vec<usize>,
    /// True when the subset is every block, so `value` is the full gap.
    pub is_exact: bool,
}

/// `<x_i - s, g>` for a block iterate, a vertex and a gradient block.
pub fn gap_term(x_i: &[f64], s: &[f64], g: &[f64]) -> f64 {
    x_i.iter().zip(s).zip(g).map(|((x, s), g)| (x - s) * g).sum()
}

/// Block gap `max_{s in M_i} <x_i - s, grad_i f(x)>`.
pub fn block_gap<P: ProblemSpec + ?Sized>(p: &P, x: &BlockVector, i: usize) -> Result<f64> {
    let g = p.gradient_block(x, i);
    let s = p.lmo(i, &g)?;
    Ok(gap_term(x.block(i), &s, &g))
}

/// Sum of all block gaps.
pub fn full_gap<P: ProblemSpec + ?Sized>(p: &P, x: &BlockVector) -> Result<f64> {
    (0..p.num_blocks()).map(|i| block_gap(p, x, i)).sum()
}

/// `(n / |S|) sum_{i in S} g_i(x)`, unbiased for the full gap over uniform
/// subsets of fixed size.
pub fn gap_estimate<P: ProblemSpec + ?Sized>(p: &P, x: &BlockVector, subset: &[usize]) -> Result<GapEstimate> {
    let n = p.num_blocks();
    if subset.is_empty() {
        return Err(Error::Contract("gap estimate over an empty subset".into()));
    }
    let mut sorted = subset.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    if sorted.len() != subset.len() || sorted.last().is_some_and(|&i| i >= n) {
        return Err(Error::Contract("gap estimate subset must be distinct valid blocks".into()));
    }
    let sum: f64 = subset.iter().map(|&i| block_gap(p, x, i)).sum::<Result<f64>>()?;
    Ok(GapEstimate {
        value: n as f64 / subset.len() as f64 * sum,
        subset: subset.to_vec(),
        is_exact: subset.len() == n,
    })
}
