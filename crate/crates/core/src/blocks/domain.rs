use std::sync::Arc;

use crate::error::{Error, Result};

/// Absolute per-block feasibility tolerance.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Residual above which a block is treated as infeasible instead of repaired.
pub const REPAIR_LIMIT: f64 = 1e-6;

/// The compact convex set a single coordinate block lives in.
#[derive(Clone, Debug, PartialEq)]
pub enum BlockDomain {
    /// Unit simplex `{x >= 0, sum x = 1}` in `dim` coordinates.
    Simplex { dim: usize },
    /// Euclidean ball of the given radius centred at the origin.
    L2Ball { dim: usize, radius: f64 },
    /// Convex hull of an explicit, non-empty vertex list.
    Vertices { vertices: Arc<Vec<Vec<f64>>> },
}

impl BlockDomain {
    pub fn simplex(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("simplex block of dimension 0".into()));
        }
        Ok(BlockDomain::Simplex { dim })
    }

    pub fn l2_ball(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidConfig("ball block of dimension 0".into()));
        }
        if !(radius > 0.0 && radius.is_finite()) {
            return Err(Error::InvalidConfig(format!("ball radius must be positive, got {radius}")));
        }
        Ok(BlockDomain::L2Ball { dim, radius })
    }

    pub fn vertices(vertices: Vec<Vec<f64>>) -> Result<Self> {
        let Some(first) = vertices.first() else {
            return Err(Error::InvalidConfig("empty vertex list".into()));
        };
        let dim = first.len();
        if dim == 0 || vertices.iter().any(|v| v.len() != dim) {
            return Err(Error::InvalidConfig("vertex list with inconsistent dimensions".into()));
        }
        Ok(BlockDomain::Vertices { vertices: Arc::new(vertices) })
    }

    pub fn dim(&self) -> usize {
        match self {
            BlockDomain::Simplex { dim } | BlockDomain::L2Ball { dim, .. } => *dim,
            BlockDomain::Vertices { vertices } => vertices[0].len(),
        }
    }

    /// Number of extreme points, or `None` for domains with a continuum of them.
    pub fn vertex_count(&self) -> Option<usize> {
        match self {
            BlockDomain::Simplex { dim } => Some(*dim),
            BlockDomain::L2Ball { .. } => None,
            BlockDomain::Vertices { vertices } => Some(vertices.len()),
        }
    }

    /// The `k`-th vertex of a vertex-enumerable domain.
    pub fn vertex(&self, k: usize) -> Option<Vec<f64>> {
        match self {
            BlockDomain::Simplex { dim } if k < *dim => {
                let mut v = vec![0.0; *dim];
                v[k] = 1.0;
                Some(v)
            }
            BlockDomain::Vertices { vertices } => vertices.get(k).cloned(),
            _ => None,
        }
    }

    /// Euclidean diameter `sup ||x - y||` over the block.
    pub fn diameter(&self) -> f64 {
        match self {
            BlockDomain::Simplex { dim } => {
                if *dim > 1 {
                    std::f64::consts::SQRT_2
                } else {
                    0.0
                }
            }
            BlockDomain::L2Ball { radius, .. } => 2.0 * radius,
            BlockDomain::Vertices { vertices } => {
                let mut best = 0.0f64;
                for (a, u) in vertices.iter().enumerate() {
                    for v in &vertices[a + 1..] {
                        let d2: f64 = u.iter().zip(v).map(|(p, q)| (p - q) * (p - q)).sum();
                        best = best.max(d2.sqrt());
                    }
                }
                best
            }
        }
    }

    /// A feasible starting point: the first corner, or the origin for balls.
    pub fn default_point(&self) -> Vec<f64> {
        match self {
            BlockDomain::Simplex { dim } => {
                let mut v = vec![0.0; *dim];
                v[0] = 1.0;
                v
            }
            BlockDomain::L2Ball { dim, .. } => vec![0.0; *dim],
            BlockDomain::Vertices { vertices } => vertices[0].clone(),
        }
    }

    /// Infeasibility of `x` with respect to this block; zero when feasible.
    ///
    /// Explicit vertex lists only check the dimension.
    pub fn residual(&self, x: &[f64]) -> f64 {
        if x.len() != self.dim() {
            return f64::INFINITY;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return f64::INFINITY;
        }
        match self {
            BlockDomain::Simplex { .. } => {
                let sum: f64 = x.iter().sum();
                let neg = x.iter().fold(0.0f64, |m, &v| m.max(-v));
                (sum - 1.0).abs().max(neg)
            }
            BlockDomain::L2Ball { radius, .. } => {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                (norm - radius).max(0.0)
            }
            BlockDomain::Vertices { .. } => 0.0,
        }
    }

    /// Pulls a slightly infeasible block back onto the domain.
    ///
    /// Residuals up to [`FEASIBILITY_TOL`] are left alone, residuals up to
    /// [`REPAIR_LIMIT`] are repaired, anything larger is an error.
    pub fn repair(&self, block: usize, x: &mut [f64]) -> Result<()> {
        let residual = self.residual(x);
        if residual <= FEASIBILITY_TOL {
            return Ok(());
        }
        if residual > REPAIR_LIMIT {
            return Err(Error::Infeasible { block, residual });
        }
        match self {
            BlockDomain::Simplex { .. } => {
                for v in x.iter_mut() {
                    *v = v.max(0.0);
                }
                let sum: f64 = x.iter().sum();
                for v in x.iter_mut() {
                    *v /= sum;
                }
            }
            BlockDomain::L2Ball { radius, .. } => {
                let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
                let scale = radius / norm;
                for v in x.iter_mut() {
                    *v *= scale;
                }
            }
            BlockDomain::Vertices { .. } => {}
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constructors_validate() {
        assert!(BlockDomain::simplex(0).is_err());
        assert!(BlockDomain::l2_ball(3, 0.0).is_err());
        assert!(BlockDomain::l2_ball(3, -1.0).is_err());
        assert!(BlockDomain::vertices(vec![]).is_err());
        assert!(BlockDomain::vertices(vec![vec![1.0], vec![1.0, 2.0]]).is_err());
    }

    #[test]
    fn residuals() {
        let s = BlockDomain::simplex(3).unwrap();
        assert_eq!(s.residual(&[0.2, 0.3, 0.5]), 0.0);
        assert!((s.residual(&[0.5, 0.5, 0.5]) - 0.5).abs() < 1e-15);
        assert!((s.residual(&[1.1, -0.1, 0.0]) - 0.1).abs() < 1e-12);
        let b = BlockDomain::l2_ball(2, 2.0).unwrap();
        assert_eq!(b.residual(&[1.2, -1.6]), 0.0);
        assert!((b.residual(&[3.0, 4.0]) - 3.0).abs() < 1e-12);
        assert!(s.residual(&[1.0]).is_infinite());
    }

    #[test]
    fn repair_thresholds() {
        let s = BlockDomain::simplex(2).unwrap();
        let mut x = vec![0.5 + 5e-8, 0.5];
        s.repair(0, &mut x).unwrap();
        assert!(s.residual(&x) <= 1e-15);
        let mut bad = vec![0.6, 0.5];
        assert!(matches!(s.repair(3, &mut bad), Err(Error::Infeasible { block: 3, .. })));
    }

    #[test]
    fn diameters() {
        assert_eq!(BlockDomain::simplex(1).unwrap().diameter(), 0.0);
        assert!((BlockDomain::simplex(4).unwrap().diameter() - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(BlockDomain::l2_ball(5, 0.5).unwrap().diameter(), 1.0);
        let v = BlockDomain::vertices(vec![vec![0.0, 0.0], vec![3.0, 4.0], vec![1.0, 0.0]]).unwrap();
        assert_eq!(v.diameter(), 5.0);
    }
}
