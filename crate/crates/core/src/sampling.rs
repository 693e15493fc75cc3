//! Seeded random streams and uniform subset sampling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Independent generator number `stream` derived from `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Uniform size-`tau` subset of `0..n`, drawn by sampling indices until
/// `tau` distinct ones are seen, in order of first appearance.
pub fn sample_subset<R: Rng + ?Sized>(rng: &mut R, n: usize, tau: usize) -> Vec<usize> {
    let tau = tau.min(n);
    let mut seen = vec![false; n];
    let mut out = Vec::with_capacity(tau);
    while out.len() < tau {
        let i = rng.random_range(0..n);
        if !seen[i] {
            seen[i] = true;
            out.push(i);
        }
    }
    out
}

/// Advances `comb` (strictly increasing indices below `n`) to the next
/// combination in lexicographic order. Returns false after the last one.
pub fn next_combination(comb: &mut [usize], n: usize) -> bool {
    let k = comb.len();
    for pos in (0..k).rev() {
        if comb[pos] < n - k + pos {
            comb[pos] += 1;
            for q in pos + 1..k {
                comb[q] = comb[q - 1] + 1;
            }
            return true;
        }
    }
    false
}

/// `C(n, k)` saturating at `u64::MAX`.
pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
        if acc > u64::MAX as u128 {
            return u64::MAX;
        }
    }
    acc as u64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combinations_enumerate_all() {
        let mut c = vec![0, 1];
        let mut count = 1;
        while next_combination(&mut c, 5) {
            count += 1;
        }
        assert_eq!(count, 10);
        assert_eq!(binomial(5, 2), 10);
        assert_eq!(binomial(100, 50), 100891344545564193334812497256u128.min(u64::MAX as u128) as u64);
    }

    #[test]
    fn subsets_are_distinct() {
        let mut rng = stream_rng(1, 0);
        for _ in 0..100 {
            let mut s = sample_subset(&mut rng, 10, 4);
            s.sort();
            s.dedup();
            assert_eq!(s.len(), 4);
        }
        let mut all = sample_subset(&mut rng, 3, 3);
        all.sort();
        assert_eq!(all, vec![0, 1, 2]);
    }
}
