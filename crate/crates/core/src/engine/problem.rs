use std::sync::Arc;

use crate::blocks::{self, gap_term, BlockVector, ProblemSpec, StepMode};
use crate::error::{Error, Result};
use crate::problems::svm::{StructSvm, SvmState};

/// What the solver drivers need from a problem: a server-side state, a
/// read-only snapshot handed to workers, and per-block oracle answers.
pub trait BlockProblem: Send + Sync {
    type State: Clone + Send + Sync;
    type Snapshot: Send + Sync;
    type Vertex: Clone + Send + Sync;

    fn num_blocks(&self) -> usize;
    fn initial_state(&self) -> Self::State;
    fn snapshot(&self, state: &Self::State) -> Self::Snapshot;

    /// Oracle answer for block `i` at a (possibly stale) snapshot.
    fn oracle(&self, snap: &Self::Snapshot, i: usize) -> Result<Self::Vertex>;

    /// Oracle answer and block gap for block `i` at the current state.
    fn oracle_and_gap(&self, state: &Self::State, i: usize) -> Result<(Self::Vertex, f64)>;

    fn objective(&self, state: &Self::State) -> f64;

    /// Applies a batch of disjoint blocks with step `gamma`.
    fn apply(&self, state: &mut Self::State, batch: &[(usize, Self::Vertex)], gamma: f64) -> Result<()>;

    /// Step used by the line-search variant; never worse than `schedule_gamma`.
    fn line_search(&self, state: &Self::State, batch: &[(usize, Self::Vertex)], schedule_gamma: f64) -> Result<f64>;

    fn full_gap(&self, state: &Self::State) -> Result<f64> {
        (0..self.num_blocks()).map(|i| self.oracle_and_gap(state, i).map(|(_, g)| g)).sum()
    }

    /// Explicit form, required by the lock-free driver.
    fn as_spec(&self) -> Option<&dyn ProblemSpec> {
        None
    }

    /// Step for a batch: the schedule value or a line search.
    fn step(
        &self,
        state: &Self::State,
        batch: &[(usize, Self::Vertex)],
        mode: StepMode,
        schedule_gamma: f64,
    ) -> Result<f64> {
        match mode {
            StepMode::Schedule => Ok(schedule_gamma),
            StepMode::LineSearch => self.line_search(state, batch, schedule_gamma),
        }
    }
}

impl<P: ProblemSpec> BlockProblem for P {
    type State = BlockVector;
    type Snapshot = BlockVector;
    type Vertex = Vec<f64>;

    fn num_blocks(&self) -> usize {
        ProblemSpec::num_blocks(self)
    }

    fn initial_state(&self) -> BlockVector {
        self.initial_point()
    }

    fn snapshot(&self, state: &BlockVector) -> BlockVector {
        state.clone()
    }

    fn oracle(&self, snap: &BlockVector, i: usize) -> Result<Vec<f64>> {
        let g = self.gradient_block(snap, i);
        self.lmo(i, &g)
    }

    fn oracle_and_gap(&self, state: &BlockVector, i: usize) -> Result<(Vec<f64>, f64)> {
        let g = self.gradient_block(state, i);
        let s = self.lmo(i, &g)?;
        let gap = gap_term(state.block(i), &s, &g);
        Ok((s, gap))
    }

    fn objective(&self, state: &BlockVector) -> f64 {
        ProblemSpec::objective(self, state)
    }

    fn apply(&self, state: &mut BlockVector, batch: &[(usize, Vec<f64>)], gamma: f64) -> Result<()> {
        blocks::apply_update(state, self.domains(), batch, gamma)
    }

    fn line_search(&self, state: &BlockVector, batch: &[(usize, Vec<f64>)], schedule_gamma: f64) -> Result<f64> {
        blocks::choose_step(self, state, batch, schedule_gamma)
    }

    fn as_spec(&self) -> Option<&dyn ProblemSpec> {
        Some(self)
    }
}

impl BlockProblem for StructSvm {
    type State = SvmState;
    type Snapshot = Arc<Vec<f64>>;
    type Vertex = Vec<usize>;

    fn num_blocks(&self) -> usize {
        self.num_examples()
    }

    fn initial_state(&self) -> SvmState {
        StructSvm::initial_state(self)
    }

    fn snapshot(&self, state: &SvmState) -> Arc<Vec<f64>> {
        Arc::new(state.w.clone())
    }

    fn oracle(&self, w: &Arc<Vec<f64>>, i: usize) -> Result<Vec<usize>> {
        Ok(self.max_oracle(i, w))
    }

    fn oracle_and_gap(&self, state: &SvmState, i: usize) -> Result<(Vec<usize>, f64)> {
        let y = self.max_oracle(i, &state.w);
        let g = self.block_gap(state, i, &y);
        Ok((y, g))
    }

    fn objective(&self, state: &SvmState) -> f64 {
        self.dual_objective(state)
    }

    fn apply(&self, state: &mut SvmState, batch: &[(usize, Vec<usize>)], gamma: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Contract(format!("step {gamma} outside [0, 1]")));
        }
        let mut seen = vec![false; self.num_examples()];
        for (i, _) in batch {
            if *i >= seen.len() || std::mem::replace(&mut seen[*i], true) {
                return Err(Error::Contract(format!("block {i} repeated or out of range")));
            }
        }
        for (i, y) in batch {
            self.block_update(state, *i, y, gamma);
        }
        state.push_average();
        Ok(())
    }

    fn line_search(&self, state: &SvmState, batch: &[(usize, Vec<usize>)], _schedule_gamma: f64) -> Result<f64> {
        let g = StructSvm::line_search(self, state, batch);
        if !g.is_finite() {
            return Err(Error::Numerical("non-finite line-search step".into()));
        }
        Ok(g)
    }
}
