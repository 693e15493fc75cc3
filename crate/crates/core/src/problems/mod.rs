//! Concrete problems: synthetic quadratics, the group fused lasso dual and
//! the structured SVM dual, with data generators and CSV loaders.

pub mod data;
pub mod gfl;
pub mod quadratic;
pub mod svm;

pub use gfl::{gfl_synthetic, GflProblem};
pub use quadratic::{block_diagonal, identity_simplex, random_coupled, QuadraticProblem};
pub use svm::{svm_synthetic_chain, svm_synthetic_multiclass, LabelKind, StructSvm, SvmExample, SvmState};
