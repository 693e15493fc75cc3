use crate::blocks::{BlockDomain, BlockVector};
use crate::error::Result;
use crate::oracles;

/// A block-separable problem `min f(x)` over a product of block domains,
/// with the iterate stored explicitly as a [`BlockVector`].
pub trait ProblemSpec: Send + Sync {
    fn domains(&self) -> &[BlockDomain];

    fn num_blocks(&self) -> usize {
        self.domains().len()
    }

    /// Starting point; the default corner of every block.
    fn initial_point(&self) -> BlockVector {
        BlockVector::from_domains(self.domains())
    }

    fn objective(&self, x: &BlockVector) -> f64;

    /// Partial gradient with respect to block `i`.
    fn gradient_block(&self, x: &BlockVector, i: usize) -> Vec<f64>;

    /// `d^T H d` for a direction supported on the listed blocks, when the
    /// objective is quadratic. Enables the closed-form line search.
    fn direction_curvature(&self, _x: &BlockVector, _dir: &[(usize, Vec<f64>)]) -> Option<f64> {
        None
    }

    /// Blocks whose values enter the partial gradient of block `i`, or `None`
    /// when every block does.
    fn gradient_dependencies(&self, _i: usize) -> Option<Vec<usize>> {
        None
    }

    /// Linear minimization over block `i`.
    fn lmo(&self, i: usize, g: &[f64]) -> Result<Vec<f64>> {
        oracles::lmo(&self.domains()[i], g)
    }

    /// Objective of an associated primal problem, when one exists.
    fn primal_value(&self, _x: &BlockVector) -> Option<f64> {
        None
    }
}
