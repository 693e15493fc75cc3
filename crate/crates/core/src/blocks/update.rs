use std::collections::HashSet;

use crate::blocks::{BlockDomain, BlockVector, ProblemSpec, FEASIBILITY_TOL};
use crate::error::{Error, Result};

/// Moves every block of the batch towards its vertex:
/// `x_i <- (1 - gamma) x_i + gamma s_i`. Other blocks are untouched and the
/// version is incremented.
pub fn apply_update(
    x: &mut BlockVector,
    domains: &[BlockDomain],
    batch: &[(usize, Vec<f64>)],
    gamma: f64,
) -> Result<()> {
    validate_batch(x, domains, batch)?;
    if !(0.0..=1.0).contains(&gamma) {
        return Err(Error::Contract(format!("step {gamma} outside [0, 1]")));
    }
    for (i, s) in batch {
        let block = x.block_mut(*i);
        for (xv, sv) in block.iter_mut().zip(s) {
            *xv = (1.0 - gamma) * *xv + gamma * sv;
        }
        domains[*i].repair(*i, block)?;
    }
    x.bump_version();
    Ok(())
}

pub(crate) fn validate_batch(x: &BlockVector, domains: &[BlockDomain], batch: &[(usize, Vec<f64>)]) -> Result<()> {
    let mut seen = HashSet::with_capacity(batch.len());
    for (i, s) in batch {
        if *i >= x.num_blocks() {
            return Err(Error::Contract(format!("block index {i} out of range")));
        }
        if !seen.insert(*i) {
            return Err(Error::Contract(format!("block {i} appears twice in one batch")));
        }
        let residual = domains[*i].residual(s);
        if residual > FEASIBILITY_TOL {
            return Err(Error::Infeasible { block: *i, residual });
        }
    }
    Ok(())
}

fn direction(x: &BlockVector, batch: &[(usize, Vec<f64>)]) -> Vec<(usize, Vec<f64>)> {
    batch.iter().map(|(i, s)| (*i, s.iter().zip(x.block(*i)).map(|(a, b)| a - b).collect())).collect()
}

fn along(x: &BlockVector, dir: &[(usize, Vec<f64>)], gamma: f64) -> BlockVector {
    let mut y = x.clone();
    for (i, d) in dir {
        for (v, dv) in y.block_mut(*i).iter_mut().zip(d) {
            *v += gamma * dv;
        }
    }
    y
}

fn slope<P: ProblemSpec + ?Sized>(p: &P, y: &BlockVector, dir: &[(usize, Vec<f64>)]) -> f64 {
    dir.iter().map(|(i, d)| p.gradient_block(y, *i).iter().zip(d).map(|(g, v)| g * v).sum::<f64>()).sum()
}

/// Exact minimizer of `f(x + gamma d)` over `[0, 1]`, `d = sum_i (s_i - x_i)`.
///
/// Quadratics use the closed form; other objectives bisect on the directional
/// derivative, falling back to a golden-section search on `f` when the
/// derivative is not usable.
pub fn line_search<P: ProblemSpec + ?Sized>(p: &P, x: &BlockVector, batch: &[(usize, Vec<f64>)]) -> Result<f64> {
    let dir = direction(x, batch);
    if dir.iter().all(|(_, d)| d.iter().all(|v| *v == 0.0)) {
        return Ok(0.0);
    }
    let d0 = slope(p, x, &dir);
    if !d0.is_finite() {
        return Err(Error::Numerical("non-finite directional derivative".into()));
    }
    if d0 >= 0.0 {
        return Ok(0.0);
    }
    if let Some(q) = p.direction_curvature(x, &dir) {
        if !q.is_finite() {
            return Err(Error::Numerical("non-finite curvature along direction".into()));
        }
        return Ok(if q <= 0.0 { 1.0 } else { (-d0 / q).clamp(0.0, 1.0) });
    }
    let d1 = slope(p, &along(x, &dir, 1.0), &dir);
    if d1.is_finite() {
        if d1 <= 0.0 {
            return Ok(1.0);
        }
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut usable = true;
        for _ in 0..64 {
            let mid = 0.5 * (lo + hi);
            let dm = slope(p, &along(x, &dir, mid), &dir);
            if !dm.is_finite() {
                usable = false;
                break;
            }
            if dm > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        if usable {
            return Ok(0.5 * (lo + hi));
        }
    }
    golden_section(|g| p.objective(&along(x, &dir, g)))
}

fn golden_section(f: impl Fn(f64) -> f64) -> Result<f64> {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (0.0f64, 1.0f64);
    let mut c = b - phi * (b - a);
    let mut d = a + phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..100 {
        if !(fc.is_finite() && fd.is_finite()) {
            return Err(Error::Numerical("non-finite objective along the segment".into()));
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + phi * (b - a);
            fd = f(d);
        }
    }
    // endpoints are candidates too
    let best = [(0.0, f(0.0)), (1.0, f(1.0)), (0.5 * (a + b), f(0.5 * (a + b)))]
        .into_iter()
        .filter(|(_, v)| v.is_finite())
        .min_by(|p, q| p.1.total_cmp(&q.1))
        .ok_or_else(|| Error::Numerical("non-finite objective along the segment".into()))?;
    Ok(best.0)
}

/// Step actually taken by the line-search variant: the line-search step,
/// unless the schedule step gives a lower objective.
pub fn choose_step<P: ProblemSpec + ?Sized>(
    p: &P,
    x: &BlockVector,
    batch: &[(usize, Vec<f64>)],
    schedule_gamma: f64,
) -> Result<f64> {
    let gamma = line_search(p, x, batch)?;
    let dir = direction(x, batch);
    if p.direction_curvature(x, &dir).is_some() {
        return Ok(gamma);
    }
    let f_ls = p.objective(&along(x, &dir, gamma));
    let f_sched = p.objective(&along(x, &dir, schedule_gamma));
    if !f_ls.is_finite() {
        return Err(Error::Numerical("non-finite objective along the segment".into()));
    }
    Ok(if f_sched < f_ls { schedule_gamma } else { gamma })
}
