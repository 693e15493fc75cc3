use rand::Rng;
use rand_distr::{Distribution, Pareto, Poisson};

use crate::engine::config::DelayModel;

/// One delay draw, in server iterations.
pub fn delay_sample<R: Rng + ?Sized>(model: &DelayModel, rng: &mut R) -> u64 {
    match *model {
        DelayModel::None => 0,
        DelayModel::Poisson { kappa } => {
            if kappa <= 0.0 {
                return 0;
            }
            let d: f64 = Poisson::new(kappa).expect("validated rate").sample(rng);
            d as u64
        }
        DelayModel::Pareto { kappa } => {
            if kappa <= 0.0 {
                return 0;
            }
            let d: f64 = Pareto::new(kappa / 2.0, 2.0).expect("validated scale").sample(rng);
            d.round().min(u64::MAX as f64) as u64
        }
    }
}

/// Median of the means of `groups` equal consecutive chunks.
pub fn median_of_means(values: &[f64], groups: usize) -> f64 {
    let groups = groups.clamp(1, values.len().max(1));
    let size = values.len() / groups;
    let mut means: Vec<f64> =
        values.chunks(size.max(1)).take(groups).map(|c| c.iter().sum::<f64>() / c.len() as f64).collect();
    means.sort_by(f64::total_cmp);
    let m = means.len();
    if m % 2 == 1 {
        means[m / 2]
    } else {
        0.5 * (means[m / 2 - 1] + means[m / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::stream_rng;

    #[test]
    fn zero_kappa_is_zero() {
        let mut rng = stream_rng(0, 0);
        for m in [DelayModel::Poisson { kappa: 0.0 }, DelayModel::Pareto { kappa: 0.0 }, DelayModel::None] {
            assert!((0..100).all(|_| delay_sample(&m, &mut rng) == 0));
        }
    }

    #[test]
    fn pareto_minimum_is_half_kappa() {
        let mut rng = stream_rng(1, 0);
        let m = DelayModel::Pareto { kappa: 20.0 };
        assert!((0..10_000).all(|_| delay_sample(&m, &mut rng) >= 10));
    }
}
