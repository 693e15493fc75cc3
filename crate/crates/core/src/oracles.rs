//! Linear minimization oracles `argmin_{s in M_i} <s, g>` for each block kind,
//! and a randomized approximate oracle with a controlled expected error.
//!
//! Ties are always broken towards the lowest vertex index.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::blocks::BlockDomain;
use crate::error::{Error, Result};

fn check_finite(g: &[f64]) -> Result<()> {
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite gradient passed to oracle".into()));
    }
    Ok(())
}

/// Index of the simplex corner minimizing `<e_j, g>`.
pub fn lmo_simplex(g: &[f64]) -> Result<usize> {
    if g.is_empty() {
        return Err(Error::Contract("simplex oracle called on an empty block".into()));
    }
    check_finite(g)?;
    let mut best = 0;
    for (j, &v) in g.iter().enumerate().skip(1) {
        if v < g[best] {
            best = j;
        }
    }
    Ok(best)
}

/// `-radius * g / ||g||`, or the origin when `g = 0`.
pub fn lmo_l2ball(g: &[f64], radius: f64) -> Vec<f64> {
    let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return vec![0.0; g.len()];
    }
    g.iter().map(|v| -radius * v / norm).collect()
}

/// Index of the vertex minimizing `<v, g>`.
pub fn lmo_vertex_list(g: &[f64], vertices: &[Vec<f64>]) -> Result<usize> {
    if vertices.is_empty() {
        return Err(Error::Contract("vertex oracle called with no vertices".into()));
    }
    check_finite(g)?;
    let score = |v: &[f64]| v.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
    let mut best = 0;
    let mut best_score = score(&vertices[0]);
    for (j, v) in vertices.iter().enumerate().skip(1) {
        let s = score(v);
        if s < best_score {
            best = j;
            best_score = s;
        }
    }
    Ok(best)
}

/// Exact oracle for any block kind, returning the minimizing point.
pub fn lmo(domain: &BlockDomain, g: &[f64]) -> Result<Vec<f64>> {
    if g.len() != domain.dim() {
        return Err(Error::Contract(format!(
            "gradient block of length {} for a domain of dimension {}",
            g.len(),
            domain.dim()
        )));
    }
    match domain {
        BlockDomain::Simplex { dim } => {
            let j = lmo_simplex(g)?;
            let mut s = vec![0.0; *dim];
            s[j] = 1.0;
            Ok(s)
        }
        BlockDomain::L2Ball { radius, .. } => {
            check_finite(g)?;
            Ok(lmo_l2ball(g, *radius))
        }
        BlockDomain::Vertices { vertices } => {
            let j = lmo_vertex_list(g, vertices)?;
            Ok(vertices[j].clone())
        }
    }
}

/// Smallest value of `<s, g>` over the block.
pub fn lmo_value(domain: &BlockDomain, g: &[f64]) -> Result<f64> {
    let s = lmo(domain, g)?;
    Ok(dot(&s, g))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Oracle that returns a uniformly random extreme point with probability
/// `q <= 1/2` and the exact minimizer otherwise.
///
/// `q` is chosen per call so that the expected suboptimality
/// `q * E_uniform[<v, g> - min]` is at most half the supplied budget, which
/// leaves room for sampling noise. Since this holds conditionally on every
/// call, it also holds in expectation over any history.
#[derive(Clone, Debug)]
pub struct ApproxOracle {
    delta: f64,
    rng: ChaCha8Rng,
}

impl ApproxOracle {
    pub fn new(delta: f64, seed: u64) -> Result<Self> {
        if !(delta >= 0.0 && delta.is_finite()) {
            return Err(Error::InvalidConfig(format!("approximation level {delta} must be >= 0")));
        }
        Ok(Self { delta, rng: ChaCha8Rng::seed_from_u64(seed) })
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Per-block share of the mini-batch budget `delta * gamma * C / 2`.
    pub fn budget(&self, gamma: f64, curvature: f64, tau: usize) -> f64 {
        self.delta * gamma * curvature / (2.0 * tau as f64)
    }

    /// Mean suboptimality of a uniformly drawn extreme point.
    pub fn random_vertex_suboptimality(domain: &BlockDomain, g: &[f64]) -> Result<f64> {
        let best = lmo_value(domain, g)?;
        Ok(match domain {
            BlockDomain::Simplex { dim } => g.iter().sum::<f64>() / *dim as f64 - best,
            BlockDomain::L2Ball { .. } => -best,
            BlockDomain::Vertices { vertices } => {
                vertices.iter().map(|v| dot(v, g)).sum::<f64>() / vertices.len() as f64 - best
            }
        })
    }

    /// Probability of answering with a random extreme point for this call.
    pub fn mixture_weight(&self, domain: &BlockDomain, g: &[f64], budget: f64) -> Result<f64> {
        if !(budget >= 0.0) {
            return Err(Error::InvalidConfig(format!("oracle error budget {budget} is negative")));
        }
        if self.delta == 0.0 {
            return Ok(0.0);
        }
        let mean = Self::random_vertex_suboptimality(domain, g)?;
        Ok(if mean <= 0.0 { 0.5 } else { (0.5 * budget / mean).min(0.5) })
    }

    pub fn solve(&mut self, domain: &BlockDomain, g: &[f64], budget: f64) -> Result<Vec<f64>> {
        let q = self.mixture_weight(domain, g, budget)?;
        if q > 0.0 && self.rng.random::<f64>() < q {
            return Ok(self.random_extreme_point(domain));
        }
        lmo(domain, g)
    }

    fn random_extreme_point(&mut self, domain: &BlockDomain) -> Vec<f64> {
        match domain {
            BlockDomain::Simplex { dim } => {
                let mut v = vec![0.0; *dim];
                v[self.rng.random_range(0..*dim)] = 1.0;
                v
            }
            BlockDomain::L2Ball { dim, radius } => loop {
                let z: Vec<f64> = (0..*dim).map(|_| self.rng.sample(StandardNormal)).collect();
                let norm = z.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm > 0.0 {
                    break z.into_iter().map(|v| radius * v / norm).collect();
                }
            },
            BlockDomain::Vertices { vertices } => vertices[self.rng.random_range(0..vertices.len())].clone(),
        }
    }
}
