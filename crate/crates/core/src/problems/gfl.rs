//! Dual of the group fused lasso: one l2-ball block per adjacent pair of
//! time points.

use nalgebra::DMatrix;
use rand::{seq::index::sample, Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::blocks::{BlockDomain, BlockVector, ProblemSpec};
use crate::curvature::QuadraticModel;
use crate::error::{Error, Result};

/// `f(U) = 1/2 ||U D^T||_F^2 - tr(U D^T Y^T)` over columns `||u_t|| <= lambda`,
/// with `D_{t,t} = 1`, `D_{t+1,t} = -1`.
#[derive(Clone, Debug)]
pub struct GflProblem {
    /// Observations, one column per time point.
    y: DMatrix<f64>,
    lambda: f64,
    domains: Vec<BlockDomain>,
    /// Ground-truth segment of each time point, when known.
    pub segments: Option<Vec<usize>>,
}

impl GflProblem {
    pub fn new(y: DMatrix<f64>, lambda: f64) -> Result<Self> {
        if y.ncols() < 2 || y.nrows() == 0 {
            return Err(Error::InvalidConfig("need at least two time points of dimension >= 1".into()));
        }
        if y.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite observation".into()));
        }
        let domains = vec![BlockDomain::l2_ball(y.nrows(), lambda)?; y.ncols() - 1];
        Ok(Self { y, lambda, domains, segments: None })
    }

    pub fn observations(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn dim(&self) -> usize {
        self.y.nrows()
    }

    pub fn time_points(&self) -> usize {
        self.y.ncols()
    }

    /// Column `s` of `U D^T`: `u_s - u_{s-1}` with `u_{-1} = u_{n-1} = 0`.
    fn v_col(&self, u: &BlockVector, s: usize, out: &mut [f64]) {
        let last = self.y.ncols() - 1;
        out.iter_mut().for_each(|o| *o = 0.0);
        if s < last {
            out.iter_mut().zip(u.block(s)).for_each(|(o, a)| *o += a);
        }
        if s > 0 {
            out.iter_mut().zip(u.block(s - 1)).for_each(|(o, a)| *o -= a);
        }
    }

    /// Partial gradient `(U D^T - Y) D_{:,t}`.
    pub fn gradient(&self, u: &BlockVector, t: usize) -> Vec<f64> {
        let d = self.dim();
        let mut a = vec![0.0; d];
        let mut b = vec![0.0; d];
        self.v_col(u, t, &mut a);
        self.v_col(u, t + 1, &mut b);
        (0..d).map(|r| (a[r] - self.y[(r, t)]) - (b[r] - self.y[(r, t + 1)])).collect()
    }

    /// Primal point `X = Y - U D^T`.
    pub fn primal_recover(&self, u: &BlockVector) -> DMatrix<f64> {
        let mut x = self.y.clone();
        let mut col = vec![0.0; self.dim()];
        for s in 0..self.time_points() {
            self.v_col(u, s, &mut col);
            for (r, v) in col.iter().enumerate() {
                x[(r, s)] -= v;
            }
        }
        x
    }

    /// `1/2 ||X - Y||_F^2 + lambda sum_t ||x_t - x_{t+1}||_2`.
    pub fn primal_objective(&self, x: &DMatrix<f64>) -> f64 {
        let fit = 0.5 * (x - &self.y).norm_squared();
        let tv: f64 = (0..self.time_points() - 1).map(|t| (x.column(t) - x.column(t + 1)).norm()).sum();
        fit + self.lambda * tv
    }

    /// Value of the dual maximization problem, `-f(U)`.
    pub fn dual_value(&self, u: &BlockVector) -> f64 {
        -self.objective(u)
    }

    /// Exact set curvature `4 lambda^2 (2 |S| + 2 adj(S))`, where `adj(S)`
    /// counts adjacent pairs inside `S`.
    pub fn exact_set_curvature(&self, subset: &[usize]) -> f64 {
        let mut s = subset.to_vec();
        s.sort_unstable();
        s.dedup();
        let adj = s.windows(2).filter(|w| w[1] == w[0] + 1).count();
        4.0 * self.lambda * self.lambda * (2.0 * s.len() as f64 + 2.0 * adj as f64)
    }

    /// Expected set curvature over uniform subsets of size `tau`:
    /// `4 lambda^2 (2 tau + 2 tau (tau - 1) / N)` for `N` blocks.
    pub fn expected_set_curvature(&self, tau: usize) -> f64 {
        let nb = self.domains.len() as f64;
        let t = tau as f64;
        let adj = if nb > 1.0 { t * (t - 1.0) / nb } else { 0.0 };
        4.0 * self.lambda * self.lambda * (2.0 * t + 2.0 * adj)
    }
}

impl ProblemSpec for GflProblem {
    fn domains(&self) -> &[BlockDomain] {
        &self.domains
    }

    fn objective(&self, u: &BlockVector) -> f64 {
        let mut col = vec![0.0; self.dim()];
        let mut total = 0.0;
        for s in 0..self.time_points() {
            self.v_col(u, s, &mut col);
            total += col.iter().enumerate().map(|(r, v)| 0.5 * v * v - v * self.y[(r, s)]).sum::<f64>();
        }
        total
    }

    fn gradient_block(&self, u: &BlockVector, t: usize) -> Vec<f64> {
        self.gradient(u, t)
    }

    fn direction_curvature(&self, _x: &BlockVector, dir: &[(usize, Vec<f64>)]) -> Option<f64> {
        // ||Delta D^T||^2 summed over the affected time points
        let d = self.dim();
        let mut cols: Vec<(usize, Vec<f64>)> = Vec::new();
        let mut add = |s: usize, v: &[f64], sign: f64| match cols.iter_mut().find(|(k, _)| *k == s) {
            Some((_, c)) => c.iter_mut().zip(v).for_each(|(a, b)| *a += sign * b),
            None => cols.push((s, v.iter().map(|b| sign * b).collect())),
        };
        for (t, dt) in dir {
            add(*t, dt, 1.0);
            add(*t + 1, dt, -1.0);
        }
        let _ = d;
        Some(cols.iter().map(|(_, c)| c.iter().map(|v| v * v).sum::<f64>()).sum())
    }

    fn gradient_dependencies(&self, t: usize) -> Option<Vec<usize>> {
        let last = self.domains.len() - 1;
        Some((t.saturating_sub(1)..=(t + 1).min(last)).collect())
    }

    fn primal_value(&self, u: &BlockVector) -> Option<f64> {
        Some(self.primal_objective(&self.primal_recover(u)))
    }
}

impl QuadraticModel for GflProblem {
    fn num_blocks(&self) -> usize {
        self.domains.len()
    }

    fn block_domain(&self, i: usize) -> &BlockDomain {
        &self.domains[i]
    }

    fn hessian_block(&self, i: usize, j: usize) -> Option<DMatrix<f64>> {
        let d = self.dim();
        if i == j {
            Some(DMatrix::identity(d, d) * 2.0)
        } else if i.abs_diff(j) == 1 {
            Some(-DMatrix::identity(d, d))
        } else {
            None
        }
    }
}

/// Piecewise-constant signal with `segments` pieces sharing change points,
/// plus i.i.d. Gaussian noise of standard deviation `sigma`.
pub fn gfl_synthetic(d: usize, n: usize, segments: usize, sigma: f64, lambda: f64, seed: u64) -> Result<GflProblem> {
    if segments == 0 || segments > n {
        return Err(Error::InvalidConfig(format!("segment count {segments} outside [1, {n}]")));
    }
    if !(sigma >= 0.0) {
        return Err(Error::InvalidConfig("noise level must be >= 0".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cuts: Vec<usize> = if segments > 1 {
        sample(&mut rng, n - 1, segments - 1).into_iter().map(|c| c + 1).collect()
    } else {
        Vec::new()
    };
    cuts.sort_unstable();
    let means: Vec<Vec<f64>> = (0..segments).map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect()).collect();
    let mut labels = Vec::with_capacity(n);
    let mut seg = 0;
    for t in 0..n {
        if seg < cuts.len() && t == cuts[seg] {
            seg += 1;
        }
        labels.push(seg);
    }
    let y = DMatrix::from_fn(d, n, |r, t| {
        let noise: f64 = rng.sample(StandardNormal);
        means[labels[t]][r] + sigma * noise
    });
    let mut p = GflProblem::new(y, lambda)?;
    p.segments = Some(labels);
    Ok(p)
}
