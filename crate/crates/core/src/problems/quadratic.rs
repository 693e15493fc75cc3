use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::blocks::{BlockDomain, BlockVector, ProblemSpec};
use crate::curvature::QuadraticModel;
use crate::error::{Error, Result};

/// `f(x) = 1/2 x^T H x + c^T x` over a product of block domains, with `H`
/// stored as its non-zero blocks.
#[derive(Clone, Debug)]
pub struct QuadraticProblem {
    domains: Vec<BlockDomain>,
    offsets: Vec<usize>,
    rows: Vec<Vec<(usize, DMatrix<f64>)>>,
    c: Vec<Vec<f64>>,
}

const SYMMETRY_TOL: f64 = 1e-12;

impl QuadraticProblem {
    /// Builds the problem from a dense `H`. Zero blocks are dropped.
    pub fn new(domains: Vec<BlockDomain>, h: DMatrix<f64>, c: Vec<f64>) -> Result<Self> {
        let offsets = offsets_of(&domains);
        let total = *offsets.last().unwrap();
        if h.nrows() != total || h.ncols() != total || c.len() != total {
            return Err(Error::InvalidConfig(format!(
                "H is {}x{} and c has {} entries for total dimension {total}",
                h.nrows(),
                h.ncols(),
                c.len()
            )));
        }
        let mut blocks = Vec::new();
        let n = domains.len();
        for i in 0..n {
            for j in 0..n {
                let (ri, rj) = (offsets[i], offsets[j]);
                let (mi, mj) = (offsets[i + 1] - ri, offsets[j + 1] - rj);
                let b = h.view((ri, rj), (mi, mj)).into_owned();
                if b.iter().any(|v| *v != 0.0) {
                    blocks.push(((i, j), b));
                }
            }
        }
        Self::from_blocks(domains, blocks, c)
    }

    /// Builds the problem from its non-zero blocks `((i, j), H_ij)`; both
    /// `(i, j)` and `(j, i)` must be given for off-diagonal pairs.
    pub fn from_blocks(
        domains: Vec<BlockDomain>,
        blocks: Vec<((usize, usize), DMatrix<f64>)>,
        c: Vec<f64>,
    ) -> Result<Self> {
        let offsets = offsets_of(&domains);
        let n = domains.len();
        if n == 0 {
            return Err(Error::InvalidConfig("quadratic with no blocks".into()));
        }
        if c.len() != offsets[n] {
            return Err(Error::InvalidConfig("linear term has the wrong length".into()));
        }
        let mut rows: Vec<Vec<(usize, DMatrix<f64>)>> = vec![Vec::new(); n];
        for ((i, j), b) in blocks {
            if i >= n || j >= n {
                return Err(Error::InvalidConfig(format!("block ({i}, {j}) out of range")));
            }
            if b.nrows() != domains[i].dim() || b.ncols() != domains[j].dim() {
                return Err(Error::InvalidConfig(format!("block ({i}, {j}) has the wrong shape")));
            }
            if rows[i].iter().any(|(k, _)| *k == j) {
                return Err(Error::InvalidConfig(format!("block ({i}, {j}) given twice")));
            }
            rows[i].push((j, b));
        }
        for r in rows.iter_mut() {
            r.sort_by_key(|(j, _)| *j);
        }
        let c = (0..n).map(|i| c[offsets[i]..offsets[i + 1]].to_vec()).collect();
        let p = Self { domains, offsets, rows, c };
        p.check_symmetric()?;
        Ok(p)
    }

    fn check_symmetric(&self) -> Result<()> {
        for (i, row) in self.rows.iter().enumerate() {
            for (j, b) in row {
                let scale = b.amax().max(1.0);
                let ok = match self.block(*j, i) {
                    Some(t) => (b - t.transpose()).amax() <= SYMMETRY_TOL * scale,
                    None => b.amax() <= SYMMETRY_TOL,
                };
                if !ok {
                    return Err(Error::InvalidConfig(format!("H is not symmetric at block ({i}, {j})")));
                }
            }
        }
        Ok(())
    }

    pub fn block(&self, i: usize, j: usize) -> Option<&DMatrix<f64>> {
        self.rows[i].iter().find(|(k, _)| *k == j).map(|(_, b)| b)
    }

    pub fn linear_term(&self, i: usize) -> &[f64] {
        &self.c[i]
    }

    pub fn total_dim(&self) -> usize {
        *self.offsets.last().unwrap()
    }

    pub fn dense_hessian(&self) -> DMatrix<f64> {
        let total = self.total_dim();
        let mut h = DMatrix::zeros(total, total);
        for (i, row) in self.rows.iter().enumerate() {
            for (j, b) in row {
                h.view_mut((self.offsets[i], self.offsets[*j]), (b.nrows(), b.ncols())).copy_from(b);
            }
        }
        h
    }

    /// True when every off-diagonal block of `H` is zero.
    pub fn is_block_diagonal(&self) -> bool {
        self.rows.iter().enumerate().all(|(i, r)| r.iter().all(|(j, _)| *j == i))
    }

    /// Exact minimizer over a product of simplices by enumerating faces and
    /// solving the equality-constrained problem on each.
    ///
    /// Fails with a capacity error when the face count exceeds `max_faces`.
    pub fn exact_minimum(&self, max_faces: usize) -> Result<(f64, BlockVector)> {
        let dims: Vec<usize> = self.domains.iter().map(simplex_dim).collect::<Result<_>>()?;
        if self.is_block_diagonal() {
            return self.separable_minimum(&dims);
        }
        let mut faces = 1usize;
        for &m in &dims {
            faces = faces
                .checked_mul((1usize << m.min(62)) - 1)
                .filter(|&f| f <= max_faces)
                .ok_or_else(|| Error::Capacity(format!("more than {max_faces} faces")))?;
        }
        let h = self.dense_hessian();
        let c: Vec<f64> = self.c.iter().flatten().copied().collect();
        let mut masks = vec![1usize; dims.len()];
        let mut best: Option<(f64, Vec<f64>)> = None;
        loop {
            let support: Vec<Vec<usize>> = masks
                .iter()
                .zip(&self.offsets)
                .zip(&dims)
                .map(|((&mask, &off), &m)| (0..m).filter(|b| mask >> b & 1 == 1).map(|b| off + b).collect())
                .collect();
            if let Some(x) = face_minimizer(&h, &c, &support, self.total_dim()) {
                let v = quad_value(&h, &c, &x);
                if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                    best = Some((v, x));
                }
            }
            // advance the mixed-radix face counter
            let mut pos = 0;
            loop {
                if pos == masks.len() {
                    let (v, x) = best.ok_or_else(|| Error::Numerical("no feasible face".into()))?;
                    return Ok((v, self.split(&x)));
                }
                masks[pos] += 1;
                if masks[pos] < 1 << dims[pos] {
                    break;
                }
                masks[pos] = 1;
                pos += 1;
            }
        }
    }

    fn separable_minimum(&self, dims: &[usize]) -> Result<(f64, BlockVector)> {
        let mut blocks = Vec::with_capacity(dims.len());
        let mut total = 0.0;
        for (i, &m) in dims.iter().enumerate() {
            let single = QuadraticProblem::from_blocks(
                vec![self.domains[i].clone()],
                self.block(i, i).map(|b| vec![((0, 0), b.clone())]).unwrap_or_default(),
                self.c[i].clone(),
            )?;
            let h = single.dense_hessian();
            let mut best: Option<(f64, Vec<f64>)> = None;
            for mask in 1usize..1 << m {
                let support = vec![(0..m).filter(|b| mask >> b & 1 == 1).collect::<Vec<_>>()];
                if let Some(x) = face_minimizer(&h, &self.c[i], &support, m) {
                    let v = quad_value(&h, &self.c[i], &x);
                    if best.as_ref().is_none_or(|(bv, _)| v < *bv) {
                        best = Some((v, x));
                    }
                }
            }
            let (v, x) = best.ok_or_else(|| Error::Numerical("no feasible face".into()))?;
            total += v;
            blocks.push(x);
        }
        Ok((total, BlockVector::from_blocks(blocks)))
    }

    fn split(&self, x: &[f64]) -> BlockVector {
        BlockVector::from_blocks(
            (0..self.domains.len()).map(|i| x[self.offsets[i]..self.offsets[i + 1]].to_vec()).collect(),
        )
    }

    fn matvec_row(&self, x: &BlockVector, i: usize, out: &mut [f64]) {
        for (j, b) in &self.rows[i] {
            let xj = x.block(*j);
            for (col, &xv) in xj.iter().enumerate() {
                if xv != 0.0 {
                    for (r, o) in out.iter_mut().enumerate() {
                        *o += b[(r, col)] * xv;
                    }
                }
            }
        }
    }
}

fn offsets_of(domains: &[BlockDomain]) -> Vec<usize> {
    let mut offsets = vec![0];
    for d in domains {
        offsets.push(offsets.last().unwrap() + d.dim());
    }
    offsets
}

fn simplex_dim(d: &BlockDomain) -> Result<usize> {
    match d {
        BlockDomain::Simplex { dim } => Ok(*dim),
        _ => Err(Error::Unavailable("exact minimum needs simplex blocks".into())),
    }
}

fn quad_value(h: &DMatrix<f64>, c: &[f64], x: &[f64]) -> f64 {
    let xv = DVector::from_column_slice(x);
    0.5 * (xv.transpose() * h * &xv)[(0, 0)] + c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>()
}

/// Minimizer of the quadratic restricted to the affine hull of a face, if it
/// lies in the face.
fn face_minimizer(h: &DMatrix<f64>, c: &[f64], support: &[Vec<usize>], total: usize) -> Option<Vec<f64>> {
    let vars: Vec<usize> = support.iter().flatten().copied().collect();
    let (nv, nc) = (vars.len(), support.len());
    let mut kkt = DMatrix::zeros(nv + nc, nv + nc);
    let mut rhs = DVector::zeros(nv + nc);
    for (a, &va) in vars.iter().enumerate() {
        for (b, &vb) in vars.iter().enumerate() {
            kkt[(a, b)] = h[(va, vb)];
        }
        rhs[a] = -c[va];
    }
    let mut a = 0;
    for (k, s) in support.iter().enumerate() {
        for _ in s {
            kkt[(a, nv + k)] = 1.0;
            kkt[(nv + k, a)] = 1.0;
            a += 1;
        }
        rhs[nv + k] = 1.0;
    }
    let sol = kkt.clone().lu().solve(&rhs).or_else(|| kkt.svd(true, true).solve(&rhs, 1e-12).ok())?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    // the pseudo-inverse fallback may return a point off the constraints
    let mut x = vec![0.0; total];
    for (a, &v) in vars.iter().enumerate() {
        if sol[a] < -1e-12 {
            return None;
        }
        x[v] = sol[a].max(0.0);
    }
    for s in support {
        let sum: f64 = s.iter().map(|&v| x[v]).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return None;
        }
    }
    Some(x)
}

impl ProblemSpec for QuadraticProblem {
    fn domains(&self) -> &[BlockDomain] {
        &self.domains
    }

    fn objective(&self, x: &BlockVector) -> f64 {
        let mut total = 0.0;
        let mut buf = Vec::new();
        for i in 0..self.domains.len() {
            buf.clear();
            buf.resize(self.domains[i].dim(), 0.0);
            self.matvec_row(x, i, &mut buf);
            total += x.block(i).iter().zip(&buf).zip(&self.c[i]).map(|((x, h), c)| x * (0.5 * h + c)).sum::<f64>();
        }
        total
    }

    fn gradient_block(&self, x: &BlockVector, i: usize) -> Vec<f64> {
        let mut g = self.c[i].clone();
        self.matvec_row(x, i, &mut g);
        g
    }

    fn direction_curvature(&self, _x: &BlockVector, dir: &[(usize, Vec<f64>)]) -> Option<f64> {
        let mut total = 0.0;
        for (i, di) in dir {
            for (j, dj) in dir {
                if let Some(b) = self.block(*i, *j) {
                    for (r, u) in di.iter().enumerate() {
                        for (col, v) in dj.iter().enumerate() {
                            total += u * b[(r, col)] * v;
                        }
                    }
                }
            }
        }
        Some(total)
    }

    fn gradient_dependencies(&self, i: usize) -> Option<Vec<usize>> {
        Some(self.rows[i].iter().map(|(j, _)| *j).collect())
    }
}

impl QuadraticModel for QuadraticProblem {
    fn num_blocks(&self) -> usize {
        self.domains.len()
    }

    fn block_domain(&self, i: usize) -> &BlockDomain {
        &self.domains[i]
    }

    fn hessian_block(&self, i: usize, j: usize) -> Option<DMatrix<f64>> {
        self.block(i, j).cloned()
    }
}

/// `1/2 ||x||^2` over `n` copies of the `m`-dimensional simplex.
pub fn identity_simplex(n: usize, m: usize) -> Result<QuadraticProblem> {
    let domains = vec![BlockDomain::simplex(m)?; n];
    let blocks = (0..n).map(|i| ((i, i), DMatrix::identity(m, m))).collect();
    QuadraticProblem::from_blocks(domains, blocks, vec![0.0; n * m])
}

/// Random positive definite quadratic over `n` simplices of dimension `m`.
///
/// `coupling` in `[0, 1]` scales the off-diagonal blocks; `0` gives a
/// block-diagonal problem.
pub fn random_coupled(n: usize, m: usize, coupling: f64, seed: u64) -> Result<QuadraticProblem> {
    if !(0.0..=1.0).contains(&coupling) {
        return Err(Error::InvalidConfig(format!("coupling {coupling} outside [0, 1]")));
    }
    let domains = vec![BlockDomain::simplex(m)?; n];
    let total = n * m;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let a = DMatrix::from_fn(total, total, |_, _| rng.sample::<f64, _>(StandardNormal));
    let mut h = (a.transpose() * &a) / total as f64 + DMatrix::identity(total, total) * 0.1;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                h.view_mut((i * m, j * m), (m, m)).scale_mut(coupling);
            }
        }
    }
    let h = (&h + h.transpose()) * 0.5;
    let c = (0..total).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    QuadraticProblem::new(domains, h, c)
}

/// Block-diagonal random quadratic, built block by block so that large `n`
/// stays cheap.
pub fn block_diagonal(n: usize, m: usize, seed: u64) -> Result<QuadraticProblem> {
    let domains = vec![BlockDomain::simplex(m)?; n];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut blocks = Vec::with_capacity(n);
    for i in 0..n {
        let a = DMatrix::from_fn(m, m, |_, _| rng.sample::<f64, _>(StandardNormal));
        let h = (a.transpose() * &a) / m as f64 + DMatrix::identity(m, m) * 0.1;
        blocks.push(((i, i), (&h + h.transpose()) * 0.5));
    }
    let c = (0..n * m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
    QuadraticProblem::from_blocks(domains, blocks, c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::blocks::full_gap;

    #[test]
    fn rejects_asymmetric() {
        let d = vec![BlockDomain::simplex(2).unwrap()];
        let h = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(QuadraticProblem::new(d, h, vec![0.0; 2]).is_err());
    }

    #[test]
    fn identity_minimum_is_barycenter() {
        let p = identity_simplex(2, 2).unwrap();
        let (v, x) = p.exact_minimum(1000).unwrap();
        assert!((v - 0.5).abs() < 1e-12);
        assert!((x.block(0)[0] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn coupled_minimum_has_zero_gap() {
        let p = random_coupled(3, 3, 0.7, 4).unwrap();
        let (v, x) = p.exact_minimum(10_000).unwrap();
        assert!((p.objective(&x) - v).abs() < 1e-10);
        assert!(full_gap(&p, &x).unwrap().abs() < 1e-8);
        assert!(p.exact_minimum(10).is_err());
    }

    #[test]
    fn block_diagonal_matches_dense_enumeration() {
        let p = random_coupled(3, 3, 0.0, 8).unwrap();
        assert!(p.is_block_diagonal());
        let (v, _) = p.exact_minimum(1).unwrap();
        let dense =
            QuadraticProblem::new(p.domains().to_vec(), p.dense_hessian() + DMatrix::from_element(9, 9, 0.0), {
                (0..3).flat_map(|i| p.linear_term(i).to_vec()).collect()
            })
            .unwrap();
        // a tiny coupling forces the general enumeration path
        let mut h = dense.dense_hessian();
        h[(0, 3)] = 1e-14;
        h[(3, 0)] = 1e-14;
        let coupled =
            QuadraticProblem::new(p.domains().to_vec(), h, (0..3).flat_map(|i| p.linear_term(i).to_vec()).collect())
                .unwrap();
        let (w, _) = coupled.exact_minimum(10_000).unwrap();
        assert!((v - w).abs() < 1e-10);
    }
}
