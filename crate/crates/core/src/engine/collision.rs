use rand::Rng;

use crate::blocks::check_batch;
use crate::error::{Error, Result};

/// Expected number of uniform draws until `tau` distinct blocks of `n` are
/// seen: `tau + sum_{i=1}^{tau-1} i / (n - i)`.
pub fn collision_expected_calls(n: usize, tau: usize) -> Result<f64> {
    check_batch(n, tau)?;
    let extra: f64 = (1..tau).map(|i| i as f64 / (n - i) as f64).sum();
    Ok(tau as f64 + extra)
}

/// `1 - exp(-n / 60)`, the probability floor for finishing within `2 tau`
/// draws when `tau <= n / 2`.
pub fn within_two_tau_floor(n: usize) -> f64 {
    1.0 - (-(n as f64) / 60.0).exp()
}

/// Empirical distribution of the draw count.
#[derive(Clone, Debug, PartialEq)]
pub struct CollisionStats {
    pub n: usize,
    pub tau: usize,
    pub trials: usize,
    pub mean: f64,
    pub stderr: f64,
    pub median: f64,
    pub q90: f64,
    pub q99: f64,
    pub max: u64,
    /// Fraction of trials finishing within `2 tau` draws.
    pub within_two_tau: f64,
}

fn quantile(sorted: &[u64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
    let w = pos - lo as f64;
    sorted[lo] as f64 * (1.0 - w) + sorted[hi] as f64 * w
}

/// Draw-count statistics over `trials` simulated collections.
pub fn collision_simulate<R: Rng + ?Sized>(n: usize, tau: usize, trials: usize, rng: &mut R) -> Result<CollisionStats> {
    check_batch(n, tau)?;
    if trials < 2 {
        return Err(Error::InvalidConfig("need at least two trials".into()));
    }
    let mut seen = vec![0u64; n];
    let mut counts = Vec::with_capacity(trials);
    for t in 1..=trials as u64 {
        let (mut distinct, mut draws) = (0, 0u64);
        while distinct < tau {
            let i = rng.random_range(0..n);
            draws += 1;
            if seen[i] != t {
                seen[i] = t;
                distinct += 1;
            }
        }
        counts.push(draws);
    }
    let mean = counts.iter().sum::<u64>() as f64 / trials as f64;
    let var = counts.iter().map(|&c| (c as f64 - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    let within = counts.iter().filter(|&&c| c <= 2 * tau as u64).count() as f64 / trials as f64;
    counts.sort_unstable();
    Ok(CollisionStats {
        n,
        tau,
        trials,
        mean,
        stderr: (var / trials as f64).sqrt(),
        median: quantile(&counts, 0.5),
        q90: quantile(&counts, 0.9),
        q99: quantile(&counts, 0.99),
        max: *counts.last().unwrap(),
        within_two_tau: within,
    })
}

/// Balls-in-bins regime for `m` balls in `n` bins.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LoadRegime {
    /// `m < n / ln n`: bound `3 ln n / ln(n / m)`.
    Sparse(f64),
    /// Up to `n ln n`: `Theta(ln n)`; reported as `ln n` with unknown constant.
    Moderate(f64),
    /// `m > n ln n`: `m / n + sqrt(2 m / n ln n)` up to the constant.
    Dense(f64),
}

impl LoadRegime {
    pub fn value(&self) -> f64 {
        match *self {
            LoadRegime::Sparse(v) | LoadRegime::Moderate(v) | LoadRegime::Dense(v) => v,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            LoadRegime::Sparse(_) => "sparse",
            LoadRegime::Moderate(_) => "moderate",
            LoadRegime::Dense(_) => "dense",
        }
    }
}

/// Regime and reference value of the maximum load.
pub fn max_load_bound(m: usize, n: usize) -> LoadRegime {
    let (mf, nf) = (m as f64, n as f64);
    let ln = nf.ln().max(f64::MIN_POSITIVE);
    if n > 1 && mf < nf / ln {
        LoadRegime::Sparse(3.0 * ln / (nf / mf).ln())
    } else if mf <= nf * ln {
        LoadRegime::Moderate(ln)
    } else {
        LoadRegime::Dense(mf / nf + (2.0 * mf / nf * ln).sqrt())
    }
}

/// Empirical mean and standard error of the maximum bin load.
pub fn max_load_simulate<R: Rng + ?Sized>(m: usize, n: usize, trials: usize, rng: &mut R) -> Result<(f64, f64)> {
    if m == 0 || n == 0 || trials < 2 {
        return Err(Error::InvalidConfig("need m, n >= 1 and at least two trials".into()));
    }
    let mut bins = vec![0u64; n];
    let mut loads = Vec::with_capacity(trials);
    for _ in 0..trials {
        bins.iter_mut().for_each(|b| *b = 0);
        for _ in 0..m {
            bins[rng.random_range(0..n)] += 1;
        }
        loads.push(*bins.iter().max().unwrap() as f64);
    }
    let mean = loads.iter().sum::<f64>() / trials as f64;
    let var = loads.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (trials - 1) as f64;
    Ok((mean, (var / trials as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::stream_rng;

    #[test]
    fn formula_values() {
        assert_eq!(collision_expected_calls(2, 2).unwrap(), 3.0);
        assert!((collision_expected_calls(4, 3).unwrap() - 13.0 / 3.0).abs() < 1e-12);
        assert_eq!(collision_expected_calls(5, 1).unwrap(), 1.0);
        assert!(collision_expected_calls(3, 4).is_err());
    }

    #[test]
    fn single_ball() {
        let mut rng = stream_rng(1, 0);
        assert_eq!(max_load_simulate(1, 17, 100, &mut rng).unwrap().0, 1.0);
    }

    #[test]
    fn regimes() {
        assert_eq!(max_load_bound(2, 1000).name(), "sparse");
        assert_eq!(max_load_bound(64, 64).name(), "moderate");
        assert_eq!(max_load_bound(10_000, 10).name(), "dense");
    }
}
