//! Block-coordinate Frank-Wolfe solvers: synchronous mini-batch, asynchronous
//! (simulated and threaded) and lock-free, with curvature diagnostics and
//! structured SVM and group fused lasso applications.

// negated comparisons below also reject NaN
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod blocks;
pub mod curvature;
pub mod engine;
pub mod error;
pub mod oracles;
pub mod problems;
pub mod sampling;

pub use error::{Error, Result};
