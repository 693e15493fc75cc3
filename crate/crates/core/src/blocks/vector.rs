use crate::blocks::domain::BlockDomain;
use crate::error::{Error, Result};

/// A point of the product domain, stored as contiguous blocks.
///
/// The block layout is fixed at construction. `version` is the number of
/// updates that have been applied to the vector.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockVector {
    data: Vec<f64>,
    offsets: Vec<usize>,
    version: u64,
}

impl BlockVector {
    pub fn from_blocks(blocks: Vec<Vec<f64>>) -> Self {
        let mut offsets = Vec::with_capacity(blocks.len() + 1);
        offsets.push(0);
        let mut data = Vec::with_capacity(blocks.iter().map(Vec::len).sum());
        for b in blocks {
            data.extend_from_slice(&b);
            offsets.push(data.len());
        }
        Self { data, offsets, version: 0 }
    }

    pub fn zeros(dims: &[usize]) -> Self {
        Self::from_blocks(dims.iter().map(|&d| vec![0.0; d]).collect())
    }

    /// The default feasible point of each block.
    pub fn from_domains(domains: &[BlockDomain]) -> Self {
        Self::from_blocks(domains.iter().map(BlockDomain::default_point).collect())
    }

    pub fn num_blocks(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn total_dim(&self) -> usize {
        self.data.len()
    }

    pub fn block_dim(&self, i: usize) -> usize {
        self.offsets[i + 1] - self.offsets[i]
    }

    pub fn block(&self, i: usize) -> &[f64] {
        &self.data[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn block_mut(&mut self, i: usize) -> &mut [f64] {
        let (a, b) = (self.offsets[i], self.offsets[i + 1]);
        &mut self.data[a..b]
    }

    /// Offset of block `i` in the flat coordinate vector.
    pub fn offset(&self, i: usize) -> usize {
        self.offsets[i]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn blocks(&self) -> impl Iterator<Item = &[f64]> {
        self.offsets.windows(2).map(move |w| &self.data[w[0]..w[1]])
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn set_version(&mut self, version: u64) {
        self.version = version;
    }

    /// Checks every block against its domain at [`super::FEASIBILITY_TOL`].
    pub fn check_feasible(&self, domains: &[BlockDomain]) -> Result<()> {
        if domains.len() != self.num_blocks() {
            return Err(Error::Contract(format!("{} domains for {} blocks", domains.len(), self.num_blocks())));
        }
        for (i, dom) in domains.iter().enumerate() {
            let residual = dom.residual(self.block(i));
            if residual > super::FEASIBILITY_TOL {
                return Err(Error::Infeasible { block: i, residual });
            }
        }
        Ok(())
    }

    /// Largest per-block residual.
    pub fn max_residual(&self, domains: &[BlockDomain]) -> f64 {
        domains.iter().enumerate().map(|(i, d)| d.residual(self.block(i))).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout() {
        let x = BlockVector::from_blocks(vec![vec![1.0, 2.0], vec![3.0], vec![4.0, 5.0, 6.0]]);
        assert_eq!(x.num_blocks(), 3);
        assert_eq!(x.total_dim(), 6);
        assert_eq!(x.block(2), &[4.0, 5.0, 6.0]);
        assert_eq!(x.offset(2), 3);
        let collected: Vec<&[f64]> = x.blocks().collect();
        assert_eq!(collected[1], &[3.0]);
    }

    #[test]
    fn feasibility() {
        let doms = vec![BlockDomain::simplex(2).unwrap(), BlockDomain::l2_ball(1, 1.0).unwrap()];
        let x = BlockVector::from_domains(&doms);
        x.check_feasible(&doms).unwrap();
        let bad = BlockVector::from_blocks(vec![vec![0.7, 0.7], vec![0.0]]);
        assert!(matches!(bad.check_feasible(&doms), Err(Error::Infeasible { block: 0, .. })));
    }
}
