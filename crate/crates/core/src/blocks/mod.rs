//! Block-structured iterates, step schedules, updates, line search and the
//! surrogate duality gap.

mod domain;
mod gap;
mod problem;
mod step;
mod update;
mod vector;

pub use domain::{BlockDomain, FEASIBILITY_TOL, REPAIR_LIMIT};
pub use gap::{block_gap, full_gap, gap_estimate, gap_term, GapEstimate};
pub use problem::ProblemSpec;
pub(crate) use step::check_batch;
pub use step::{step_size, StepMode, StepSchedule};
pub use update::{apply_update, choose_step, line_search};
pub use vector::BlockVector;
