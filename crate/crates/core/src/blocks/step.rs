use crate::error::{Error, Result};

/// How the server picks the step for a mini-batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum StepMode {
    #[default]
    Schedule,
    LineSearch,
}

/// Mini-batch step schedule `gamma_k = min(1, 2 n tau / (tau^2 k + 2 n))`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepSchedule {
    n: usize,
    tau: usize,
    pub mode: StepMode,
}

impl StepSchedule {
    pub fn new(n: usize, tau: usize, mode: StepMode) -> Result<Self> {
        check_batch(n, tau)?;
        Ok(Self { n, tau, mode })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    /// Step for the update that turns version `k` into version `k + 1`.
    pub fn gamma(&self, k: u64) -> f64 {
        raw_step(k, self.n, self.tau).min(1.0)
    }
}

pub(crate) fn check_batch(n: usize, tau: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::InvalidConfig("problem has no blocks".into()));
    }
    if tau == 0 || tau > n {
        return Err(Error::InvalidConfig(format!("batch size {tau} outside [1, {n}]")));
    }
    Ok(())
}

fn raw_step(k: u64, n: usize, tau: usize) -> f64 {
    let (n, tau, k) = (n as f64, tau as f64, k as f64);
    2.0 * n * tau / (tau * tau * k + 2.0 * n)
}

/// `min(1, 2 n tau / (tau^2 k + 2 n))`, the clamped mini-batch schedule.
pub fn step_size(k: u64, n: usize, tau: usize) -> Result<f64> {
    check_batch(n, tau)?;
    Ok(raw_step(k, n, tau).min(1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_values() {
        assert_eq!(step_size(0, 100, 1).unwrap(), 1.0);
        assert!((step_size(500, 100, 2).unwrap() - 400.0 / 2200.0).abs() < 1e-15);
        // raw value 5/3 is clamped
        assert_eq!(step_size(10, 100, 10).unwrap(), 1.0);
        assert!((raw_step(10, 100, 10) - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_batch() {
        assert!(step_size(3, 10, 0).is_err());
        assert!(step_size(3, 10, 11).is_err());
        assert!(StepSchedule::new(0, 1, StepMode::Schedule).is_err());
    }

    #[test]
    fn monotone_and_exact_below_one() {
        for &(n, tau) in &[(1usize, 1usize), (7, 3), (100, 10), (256, 16)] {
            let mut prev = f64::INFINITY;
            for k in 0..5000u64 {
                let g = step_size(k, n, tau).unwrap();
                assert!(g <= prev && g > 0.0 && g <= 1.0);
                let raw = raw_step(k, n, tau);
                if raw <= 1.0 {
                    assert_eq!(g, raw);
                    if prev < 1.0 {
                        assert!(g < prev);
                    }
                }
                prev = g;
            }
        }
    }
}
