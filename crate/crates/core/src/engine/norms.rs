use nalgebra::DMatrix;

use crate::blocks::{check_batch, BlockDomain};
use crate::curvature::{spectral_norm, QuadraticModel};
use crate::error::{Error, Result};

/// Euclidean diameters and the block gradient-Lipschitz constant.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NormConstants {
    pub tau: usize,
    /// Largest single-block diameter.
    pub d1: f64,
    /// Largest diameter of a product of `tau` blocks.
    pub d_tau: f64,
    /// `max_i ||H_{i,:}||`, the largest block-row operator norm; `None`
    /// without a Hessian.
    pub l1: Option<f64>,
}

/// Diameters from the block domains alone.
pub fn diameters(domains: &[BlockDomain], tau: usize) -> Result<NormConstants> {
    check_batch(domains.len(), tau)?;
    let mut d: Vec<f64> = domains.iter().map(BlockDomain::diameter).collect();
    d.sort_by(|a, b| b.total_cmp(a));
    let d_tau = d[..tau].iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(NormConstants { tau, d1: d[0], d_tau, l1: None })
}

/// Diameters plus `L^1` from the block Hessian.
pub fn norm_constants<M: QuadraticModel + ?Sized>(model: &M, tau: usize) -> Result<NormConstants> {
    let n = model.num_blocks();
    let domains: Vec<BlockDomain> = (0..n).map(|i| model.block_domain(i).clone()).collect();
    let mut c = diameters(&domains, tau)?;
    let total: usize = domains.iter().map(BlockDomain::dim).sum();
    let mut l1 = 0.0f64;
    for i in 0..n {
        let rows = domains[i].dim();
        let mut row = DMatrix::zeros(rows, total);
        let mut off = 0;
        for (j, dj) in domains.iter().enumerate() {
            if let Some(h) = model.hessian_block(i, j) {
                row.view_mut((0, off), (rows, dj.dim())).copy_from(&h);
            }
            off += dj.dim();
        }
        l1 = l1.max(spectral_norm(&row));
    }
    c.l1 = Some(l1);
    Ok(c)
}

/// Multiplier regime of the bounded-delay prediction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum DelayRegime {
    /// `tau kappa_max < n / ln n`: `3 ln n / ln(n / (tau kappa_max))`.
    Small,
    /// Up to `n ln n`: `ln n`, constant unknown.
    Moderate,
    /// Beyond `n ln n`: `tau kappa_max / n`.
    Large,
}

/// Predicted oracle inexactness caused by delays.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DeltaPrediction {
    /// `4 kappa tau L^1 D^1 D^tau / C_f^tau`.
    pub unbounded: Option<f64>,
    /// `c 4 tau L^1 D^1 sqrt(kappa) D^tau / C_f^tau`, when `kappa_max` is given.
    pub bounded: Option<f64>,
    pub multiplier: Option<f64>,
    pub regime: Option<DelayRegime>,
}

/// Multiplier `c_{n, tau kappa_max}` and its regime.
pub fn delay_multiplier(n: usize, tau: usize, kappa_max: f64) -> (f64, DelayRegime) {
    let nf = n as f64;
    let ln = nf.ln();
    let m = tau as f64 * kappa_max;
    if m == 0.0 {
        return (0.0, DelayRegime::Small);
    }
    if m < nf / ln {
        (3.0 * ln / (nf / m).ln(), DelayRegime::Small)
    } else if m <= nf * ln {
        (ln, DelayRegime::Moderate)
    } else {
        (m / nf, DelayRegime::Large)
    }
}

/// Both delay predictions. Diagnostic only; `L^1` must be known for either
/// of them to be computable.
pub fn delta_prediction(
    c: &NormConstants,
    n: usize,
    kappa: f64,
    kappa_max: Option<f64>,
    cf_tau: f64,
) -> Result<DeltaPrediction> {
    if !(kappa >= 0.0) || kappa_max.is_some_and(|k| !(k >= 0.0)) {
        return Err(Error::InvalidConfig("delays must be nonnegative".into()));
    }
    if !(cf_tau > 0.0) {
        return Err(Error::InvalidConfig(format!("curvature {cf_tau} must be positive")));
    }
    let none = DeltaPrediction { unbounded: None, bounded: None, multiplier: None, regime: None };
    let Some(l1) = c.l1 else { return Ok(none) };
    let t = c.tau as f64;
    let base = 4.0 * t * l1 * c.d1 * c.d_tau / cf_tau;
    let mut out = DeltaPrediction { unbounded: Some(kappa * base), ..none };
    if let Some(km) = kappa_max {
        let (mult, regime) = delay_multiplier(n, c.tau, km);
        out.bounded = Some(mult * base * kappa.sqrt());
        out.multiplier = Some(mult);
        out.regime = Some(regime);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simplex_diameters() {
        let doms: Vec<_> = (0..6).map(|_| BlockDomain::simplex(3).unwrap()).collect();
        let c = diameters(&doms, 4).unwrap();
        assert!((c.d1 - 2f64.sqrt()).abs() < 1e-15);
        assert!((c.d_tau - 8f64.sqrt()).abs() < 1e-12);
        assert!(c.l1.is_none());
    }

    #[test]
    fn zero_delay() {
        let c = NormConstants { tau: 2, d1: 1.0, d_tau: 2.0, l1: Some(3.0) };
        let d = delta_prediction(&c, 10, 0.0, Some(0.0), 5.0).unwrap();
        assert_eq!(d.unbounded, Some(0.0));
        assert_eq!(d.bounded, Some(0.0));
    }

    #[test]
    fn missing_hessian() {
        let c = NormConstants { tau: 1, d1: 1.0, d_tau: 1.0, l1: None };
        let d = delta_prediction(&c, 10, 3.0, None, 1.0).unwrap();
        assert!(d.unbounded.is_none() && d.bounded.is_none());
    }
}
