//! Set curvature, expected set curvature, boundedness and incoherence of
//! quadratic objectives, and the bounds built from them.

use std::fmt::Write as _;
use std::io::Write;

use nalgebra::DMatrix;
use rand::Rng;

use crate::blocks::BlockDomain;
use crate::error::{Error, Result};
use crate::sampling::{binomial, next_combination, sample_subset, stream_rng};

/// A quadratic objective seen through its block Hessian.
pub trait QuadraticModel {
    fn num_blocks(&self) -> usize;
    fn block_domain(&self, i: usize) -> &BlockDomain;
    /// Block `H_ij`, or `None` when it is zero.
    fn hessian_block(&self, i: usize, j: usize) -> Option<DMatrix<f64>>;
}

/// Sizes above which exact computation gives way to sampling.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnumerationLimits {
    /// Largest number of difference vectors enumerated for one subset.
    pub max_directions: u64,
    /// Largest number of subsets averaged exactly.
    pub max_subsets: u64,
    /// Monte-Carlo sample count.
    pub samples: usize,
    pub seed: u64,
}

impl Default for EnumerationLimits {
    fn default() -> Self {
        Self { max_directions: 4096, max_subsets: 100_000, samples: 10_000, seed: 0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CurvatureMethod {
    ExactEnumeration,
    MonteCarlo,
    /// Best value found by ascent; a lower bound on the supremum.
    LowerBound,
}

impl CurvatureMethod {
    pub fn tag(&self) -> &'static str {
        match self {
            CurvatureMethod::ExactEnumeration => "exact-vertex-enumeration",
            CurvatureMethod::MonteCarlo => "monte-carlo",
            CurvatureMethod::LowerBound => "lower-bound",
        }
    }
}

/// Curvature of one subset.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SetCurvature {
    pub value: f64,
    pub exact: bool,
}

fn difference_set(domain: &BlockDomain) -> Option<Vec<Vec<f64>>> {
    let count = domain.vertex_count()?;
    let vertices: Vec<Vec<f64>> = (0..count).filter_map(|k| domain.vertex(k)).collect();
    let mut out: Vec<Vec<f64>> = vec![vec![0.0; domain.dim()]];
    for a in &vertices {
        for b in &vertices {
            let d: Vec<f64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
            if !out.iter().any(|e| e == &d) {
                out.push(d);
            }
        }
    }
    Some(out)
}

fn subset_hessian<M: QuadraticModel + ?Sized>(model: &M, subset: &[usize]) -> (DMatrix<f64>, Vec<usize>) {
    let mut offsets = vec![0];
    for &i in subset {
        offsets.push(offsets.last().unwrap() + model.block_domain(i).dim());
    }
    let dim = *offsets.last().unwrap();
    let mut h = DMatrix::zeros(dim, dim);
    for (a, &i) in subset.iter().enumerate() {
        for (b, &j) in subset.iter().enumerate() {
            if let Some(blk) = model.hessian_block(i, j) {
                h.view_mut((offsets[a], offsets[b]), (blk.nrows(), blk.ncols())).copy_from(&blk);
            }
        }
    }
    (h, offsets)
}

fn form(h: &DMatrix<f64>, d: &[f64]) -> f64 {
    let mut total = 0.0;
    for c in 0..d.len() {
        if d[c] == 0.0 {
            continue;
        }
        let col = h.column(c);
        let s: f64 = col.iter().zip(d).map(|(a, b)| a * b).sum();
        total += s * d[c];
    }
    total
}

fn check_subset(n: usize, subset: &[usize]) -> Result<()> {
    let mut s = subset.to_vec();
    s.sort_unstable();
    s.dedup();
    if s.is_empty() || s.len() != subset.len() || s[s.len() - 1] >= n {
        return Err(Error::Contract("subset must be non-empty distinct valid blocks".into()));
    }
    Ok(())
}

/// Number of difference vectors exact enumeration would visit, if finite.
pub fn direction_count<M: QuadraticModel + ?Sized>(model: &M, subset: &[usize]) -> Option<u64> {
    let mut count: u64 = 1;
    for &i in subset {
        let m = difference_set(model.block_domain(i))?.len() as u64;
        count = count.saturating_mul(m);
    }
    Some(count)
}

/// `max (s - x)_S^T H_S (s - x)_S` over vertex pairs, which is the exact set
/// curvature of a quadratic over polytope blocks.
pub fn set_curvature_exact<M: QuadraticModel + ?Sized>(
    model: &M,
    subset: &[usize],
    limits: &EnumerationLimits,
) -> Result<f64> {
    check_subset(model.num_blocks(), subset)?;
    if let [i] = subset {
        if let BlockDomain::L2Ball { radius, .. } = model.block_domain(*i) {
            let norm = model.hessian_block(*i, *i).map(|b| spectral_norm(&b)).unwrap_or(0.0);
            return Ok(4.0 * radius * radius * norm);
        }
    }
    let count = direction_count(model, subset)
        .ok_or_else(|| Error::Capacity("exact curvature needs vertex-enumerable blocks".into()))?;
    if count > limits.max_directions {
        return Err(Error::Capacity(format!(
            "{count} difference vectors exceed the limit of {}",
            limits.max_directions
        )));
    }
    let sets: Vec<Vec<Vec<f64>>> = subset.iter().map(|&i| difference_set(model.block_domain(i)).unwrap()).collect();
    let (h, offsets) = subset_hessian(model, subset);
    let mut idx = vec![0usize; subset.len()];
    let mut d = vec![0.0; h.nrows()];
    let mut best = 0.0f64;
    loop {
        for (a, set) in sets.iter().enumerate() {
            d[offsets[a]..offsets[a + 1]].copy_from_slice(&set[idx[a]]);
        }
        best = best.max(form(&h, &d));
        let mut pos = 0;
        loop {
            if pos == idx.len() {
                return Ok(best);
            }
            idx[pos] += 1;
            if idx[pos] < sets[pos].len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

/// Lower bound on the set curvature by linearized ascent from random
/// starting directions.
pub fn set_curvature_ascent<M: QuadraticModel + ?Sized, R: Rng + ?Sized>(
    model: &M,
    subset: &[usize],
    restarts: usize,
    rng: &mut R,
) -> Result<f64> {
    check_subset(model.num_blocks(), subset)?;
    let (h, offsets) = subset_hessian(model, subset);
    let doms: Vec<&BlockDomain> = subset.iter().map(|&i| model.block_domain(i)).collect();
    let mut best = 0.0f64;
    for _ in 0..restarts.max(1) {
        let mut g: Vec<f64> = (0..h.nrows()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut value = -1.0;
        for _ in 0..200 {
            let mut d = vec![0.0; h.nrows()];
            for (a, dom) in doms.iter().enumerate() {
                let ga = &g[offsets[a]..offsets[a + 1]];
                d[offsets[a]..offsets[a + 1]].copy_from_slice(&best_difference(dom, ga));
            }
            let v = form(&h, &d);
            if v <= value + 1e-15 * v.abs().max(1.0) {
                break;
            }
            value = v;
            g = (&h * nalgebra::DVector::from_column_slice(&d)).iter().copied().collect();
        }
        best = best.max(value.max(0.0));
    }
    Ok(best)
}

/// Difference of two points of the block maximizing `<g, d>`.
fn best_difference(dom: &BlockDomain, g: &[f64]) -> Vec<f64> {
    match dom {
        BlockDomain::L2Ball { radius, .. } => {
            let norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm == 0.0 {
                vec![0.0; g.len()]
            } else {
                g.iter().map(|v| 2.0 * radius * v / norm).collect()
            }
        }
        _ => {
            let count = dom.vertex_count().unwrap_or(0);
            let score = |v: &[f64]| v.iter().zip(g).map(|(a, b)| a * b).sum::<f64>();
            let (mut hi, mut lo) = (0, 0);
            let (mut hi_s, mut lo_s) = (f64::NEG_INFINITY, f64::INFINITY);
            for k in 0..count {
                let v = dom.vertex(k).unwrap();
                let s = score(&v);
                if s > hi_s {
                    hi_s = s;
                    hi = k;
                }
                if s < lo_s {
                    lo_s = s;
                    lo = k;
                }
            }
            let (a, b) = (dom.vertex(hi).unwrap(), dom.vertex(lo).unwrap());
            a.iter().zip(&b).map(|(p, q)| p - q).collect()
        }
    }
}

/// Exact set curvature when within limits, otherwise an ascent lower bound.
pub fn set_curvature<M: QuadraticModel + ?Sized>(
    model: &M,
    subset: &[usize],
    limits: &EnumerationLimits,
) -> Result<SetCurvature> {
    match set_curvature_exact(model, subset, limits) {
        Ok(value) => Ok(SetCurvature { value, exact: true }),
        Err(Error::Capacity(_)) => {
            let mut rng =
                stream_rng(limits.seed, subset.iter().fold(17u64, |h, &i| h.wrapping_mul(31).wrapping_add(i as u64)));
            let value = set_curvature_ascent(model, subset, 16, &mut rng)?;
            Ok(SetCurvature { value, exact: false })
        }
        Err(e) => Err(e),
    }
}

/// Expected set curvature over uniform subsets of size `tau`.
#[derive(Clone, Debug, PartialEq)]
pub struct TauCurvature {
    pub tau: usize,
    pub value: f64,
    /// Standard error of the Monte-Carlo mean; zero for exact averages.
    pub stderr: f64,
    pub method: CurvatureMethod,
    /// Number of subsets visited.
    pub subsets: u64,
}

/// Exact average over every size-`tau` subset when there are at most
/// `limits.max_subsets` of them, otherwise a seeded Monte-Carlo mean.
pub fn expected_set_curvature<M: QuadraticModel + ?Sized>(
    model: &M,
    tau: usize,
    limits: &EnumerationLimits,
) -> Result<TauCurvature> {
    let n = model.num_blocks();
    crate::blocks::check_batch(n, tau)?;
    let total = binomial(n, tau);
    let mut all_exact = true;
    if total <= limits.max_subsets {
        let mut comb: Vec<usize> = (0..tau).collect();
        let mut sum = 0.0;
        loop {
            let c = set_curvature(model, &comb, limits)?;
            all_exact &= c.exact;
            sum += c.value;
            if !next_combination(&mut comb, n) {
                break;
            }
        }
        let method = if all_exact { CurvatureMethod::ExactEnumeration } else { CurvatureMethod::LowerBound };
        return Ok(TauCurvature { tau, value: sum / total as f64, stderr: 0.0, method, subsets: total });
    }
    let mut rng = stream_rng(limits.seed, tau as u64);
    let samples = limits.samples.max(2);
    let mut values = Vec::with_capacity(samples);
    for _ in 0..samples {
        let s = sample_subset(&mut rng, n, tau);
        let c = set_curvature(model, &s, limits)?;
        all_exact &= c.exact;
        values.push(c.value);
    }
    let mean = values.iter().sum::<f64>() / samples as f64;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (samples - 1) as f64;
    let method = if all_exact { CurvatureMethod::MonteCarlo } else { CurvatureMethod::LowerBound };
    Ok(TauCurvature { tau, value: mean, stderr: (var / samples as f64).sqrt(), method, subsets: samples as u64 })
}

/// Boundedness `B_i`, incoherence `mu_ij` and their uniform means.
#[derive(Clone, Debug, PartialEq)]
pub struct Incoherence {
    pub b: Vec<f64>,
    pub mu: DMatrix<f64>,
    pub b_mean: f64,
    /// Mean of `mu_ij` over ordered pairs `i != j`.
    pub mu_mean: f64,
}

impl Incoherence {
    /// Largest off-diagonal `mu_ij`.
    pub fn mu_max(&self) -> f64 {
        let n = self.b.len();
        let mut m = 0.0f64;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m = m.max(self.mu[(i, j)]);
                }
            }
        }
        m
    }
}

pub fn spectral_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    m.clone().svd(false, false).singular_values.max()
}

fn points(dom: &BlockDomain) -> Option<Vec<Vec<f64>>> {
    let count = dom.vertex_count()?;
    Some((0..count).filter_map(|k| dom.vertex(k)).collect())
}

fn bilinear(h: &DMatrix<f64>, u: &[f64], v: &[f64]) -> f64 {
    let mut total = 0.0;
    for (c, vc) in v.iter().enumerate() {
        if *vc != 0.0 {
            total += vc * h.column(c).iter().zip(u).map(|(a, b)| a * b).sum::<f64>();
        }
    }
    total
}

fn sup_bilinear(h: &DMatrix<f64>, di: &BlockDomain, dj: &BlockDomain, limits: &EnumerationLimits) -> Result<f64> {
    match (points(di), points(dj)) {
        (Some(pi), Some(pj)) => {
            if (pi.len() as u64).saturating_mul(pj.len() as u64) > limits.max_directions {
                return Err(Error::Capacity("too many vertex pairs for incoherence".into()));
            }
            let mut best = f64::NEG_INFINITY;
            for u in &pi {
                for v in &pj {
                    best = best.max(bilinear(h, u, v));
                }
            }
            Ok(best)
        }
        (None, None) => {
            let (ri, rj) = (ball_radius(di), ball_radius(dj));
            Ok(ri * rj * spectral_norm(h))
        }
        (Some(pi), None) => {
            let r = ball_radius(dj);
            Ok(pi
                .iter()
                .map(|u| r * norm(&(h.transpose() * nalgebra::DVector::from_column_slice(u))))
                .fold(0.0, f64::max))
        }
        (None, Some(pj)) => {
            let r = ball_radius(di);
            Ok(pj.iter().map(|v| r * norm(&(h * nalgebra::DVector::from_column_slice(v)))).fold(0.0, f64::max))
        }
    }
}

fn norm(v: &nalgebra::DVector<f64>) -> f64 {
    v.norm()
}

fn ball_radius(d: &BlockDomain) -> f64 {
    match d {
        BlockDomain::L2Ball { radius, .. } => *radius,
        _ => 0.0,
    }
}

/// `B_i = sup x_i^T H_ii x_i` and `mu_ij = sup x_i^T H_ij x_j`, attained at
/// vertices for polytopes and in closed form for balls.
pub fn boundedness_incoherence<M: QuadraticModel + ?Sized>(
    model: &M,
    limits: &EnumerationLimits,
) -> Result<Incoherence> {
    let n = model.num_blocks();
    let mut b = vec![0.0; n];
    let mut mu = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            if let Some(h) = model.hessian_block(i, j) {
                let v = sup_bilinear(&h, model.block_domain(i), model.block_domain(j), limits)?.max(0.0);
                if i == j {
                    b[i] = match points(model.block_domain(i)) {
                        Some(p) => p.iter().map(|x| bilinear(&h, x, x)).fold(0.0, f64::max),
                        None => v,
                    };
                } else {
                    mu[(i, j)] = v;
                }
            }
        }
    }
    let b_mean = b.iter().sum::<f64>() / n as f64;
    let mu_mean = if n > 1 { mu.sum() / (n * (n - 1)) as f64 } else { 0.0 };
    Ok(Incoherence { b, mu, b_mean, mu_mean })
}

/// `4 (tau B + tau (tau - 1) mu)`.
pub fn incoherence_bound(tau: usize, b: f64, mu: f64) -> f64 {
    let t = tau as f64;
    4.0 * (t * b + t * (t - 1.0) * mu)
}

/// Whether the matrix with `b` on the diagonal and `mu` off it is
/// diagonally dominant.
pub fn sdd_speedup_check(b: &[f64], mu: &DMatrix<f64>) -> bool {
    (0..b.len()).all(|i| {
        let off: f64 = (0..b.len()).filter(|&j| j != i).map(|j| mu[(i, j)].abs()).sum();
        off <= b[i] * (1.0 + 1e-12) + 1e-300
    })
}

/// One row of a curvature report.
#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub curvature: TauCurvature,
    pub bound: f64,
}

/// Curvature constants for a grid of batch sizes.
#[derive(Clone, Debug)]
pub struct CurvatureReport {
    pub rows: Vec<ReportRow>,
    pub incoherence: Incoherence,
    pub sdd: bool,
    /// Additional named bounds, one value per row.
    pub extra_bounds: Vec<(String, Vec<f64>)>,
}

impl CurvatureReport {
    pub fn build<M: QuadraticModel + ?Sized>(model: &M, taus: &[usize], limits: &EnumerationLimits) -> Result<Self> {
        let incoherence = boundedness_incoherence(model, limits)?;
        let mut rows = Vec::with_capacity(taus.len());
        for &tau in taus {
            let curvature = expected_set_curvature(model, tau, limits)?;
            let bound = incoherence_bound(tau, incoherence.b_mean, incoherence.mu_mean);
            rows.push(ReportRow { curvature, bound });
        }
        let sdd = sdd_speedup_check(&incoherence.b, &incoherence.mu);
        Ok(Self { rows, incoherence, sdd, extra_bounds: Vec::new() })
    }

    pub fn with_bound(mut self, name: &str, f: impl Fn(usize) -> f64) -> Self {
        let values = self.rows.iter().map(|r| f(r.curvature.tau)).collect();
        self.extra_bounds.push((name.to_string(), values));
        self
    }

    /// True when every row's curvature is within its bound.
    pub fn bounds_hold(&self, tol: f64) -> bool {
        self.rows.iter().all(|r| r.curvature.value <= r.bound + tol)
    }

    /// Columns `tau,cf_tau,bound,method,stderr`, then one per extra bound.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = ["tau", "cf_tau", "bound", "method", "stderr"].map(String::from).to_vec();
        header.extend(self.extra_bounds.iter().map(|(name, _)| name.clone()));
        w.write_record(&header)?;
        for (k, r) in self.rows.iter().enumerate() {
            let mut rec = vec![
                r.curvature.tau.to_string(),
                format!("{:.12e}", r.curvature.value),
                format!("{:.12e}", r.bound),
                r.curvature.method.tag().to_string(),
                format!("{:.6e}", r.curvature.stderr),
            ];
            rec.extend(self.extra_bounds.iter().map(|(_, v)| format!("{:.12e}", v[k])));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let inc = &self.incoherence;
        let mut s = String::new();
        let _ = writeln!(s, "blocks: {}", inc.b.len());
        let _ = writeln!(s, "B (mean boundedness): {:.6e}", inc.b_mean);
        let _ = writeln!(s, "mu (mean incoherence): {:.6e}  (max {:.6e})", inc.mu_mean, inc.mu_max());
        if self.sdd {
            let _ = writeln!(s, "diagonally dominant: yes, C_f^tau grows linearly in tau");
        } else {
            let _ = writeln!(s, "diagonally dominant: no");
        }
        let _ = write!(s, "{:>6} {:>14} {:>14} {:>10}", "tau", "C_f^tau", "bound", "stderr");
        for (name, _) in &self.extra_bounds {
            let _ = write!(s, " {name:>14}");
        }
        let _ = writeln!(s, "  method");
        for (k, r) in self.rows.iter().enumerate() {
            let _ = write!(
                s,
                "{:>6} {:>14.6e} {:>14.6e} {:>10.2e}",
                r.curvature.tau, r.curvature.value, r.bound, r.curvature.stderr
            );
            for (_, vals) in &self.extra_bounds {
                let _ = write!(s, " {:>14.6e}", vals[k]);
            }
            let _ = writeln!(s, "  {}", r.curvature.method.tag());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::quadratic::{identity_simplex, random_coupled};

    #[test]
    fn identity_delta2_examples() {
        let p = identity_simplex(2, 2).unwrap();
        let lim = EnumerationLimits::default();
        assert!((set_curvature_exact(&p, &[0], &lim).unwrap() - 2.0).abs() < 1e-15);
        assert!((set_curvature_exact(&p, &[0, 1], &lim).unwrap() - 4.0).abs() < 1e-15);
        assert!((expected_set_curvature(&p, 1, &lim).unwrap().value - 2.0).abs() < 1e-15);
        assert!((expected_set_curvature(&p, 2, &lim).unwrap().value - 4.0).abs() < 1e-15);
        let inc = boundedness_incoherence(&p, &lim).unwrap();
        assert_eq!(inc.b, vec![1.0, 1.0]);
        assert_eq!(inc.mu_mean, 0.0);
        assert_eq!(incoherence_bound(2, inc.b_mean, inc.mu_mean), 8.0);
        assert!(inc.b_mean > 0.0 && sdd_speedup_check(&inc.b, &inc.mu));
    }

    #[test]
    fn zero_hessian_has_zero_curvature() {
        let domains = vec![BlockDomain::simplex(3).unwrap(); 3];
        let p = crate::problems::quadratic::QuadraticProblem::from_blocks(domains, vec![], vec![0.0; 9]).unwrap();
        let lim = EnumerationLimits::default();
        assert_eq!(set_curvature_exact(&p, &[0, 2], &lim).unwrap(), 0.0);
    }

    #[test]
    fn capacity_limits() {
        let p = identity_simplex(6, 3).unwrap();
        let lim = EnumerationLimits { max_directions: 100, ..Default::default() };
        assert!(matches!(set_curvature_exact(&p, &[0, 1, 2], &lim), Err(Error::Capacity(_))));
        let approx = set_curvature(&p, &[0, 1, 2], &lim).unwrap();
        assert!(!approx.exact);
        // ascent reaches the exact value on this separable instance
        assert!((approx.value - 6.0).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_agrees_with_exact() {
        let p = random_coupled(8, 2, 0.5, 3).unwrap();
        let exact = expected_set_curvature(&p, 3, &EnumerationLimits::default()).unwrap();
        assert_eq!(exact.method, CurvatureMethod::ExactEnumeration);
        let lim = EnumerationLimits { max_subsets: 10, samples: 4000, seed: 5, ..Default::default() };
        let mc = expected_set_curvature(&p, 3, &lim).unwrap();
        assert_eq!(mc.method, CurvatureMethod::MonteCarlo);
        assert!((mc.value - exact.value).abs() <= 3.0 * mc.stderr, "{mc:?} vs {exact:?}");
    }

    #[test]
    fn sdd_examples() {
        let n = 4;
        let diag = DMatrix::zeros(n, n);
        assert!(sdd_speedup_check(&[1.0; 4], &diag));
        let even = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 / (n as f64 - 1.0) });
        assert!(sdd_speedup_check(&[1.0; 4], &even));
        let ones = DMatrix::from_fn(n, n, |i, j| if i == j { 0.0 } else { 1.0 });
        assert!(!sdd_speedup_check(&[1.0; 4], &ones));
    }

    #[test]
    fn single_ball_block_closed_form() {
        let g = crate::problems::gfl::GflProblem::new(DMatrix::zeros(3, 4), 0.5).unwrap();
        let lim = EnumerationLimits::default();
        // H_tt = 2 I, radius 0.5: (2 * 0.5)^2 * 2
        assert!((set_curvature_exact(&g, &[1], &lim).unwrap() - 2.0).abs() < 1e-12);
        assert!(set_curvature_exact(&g, &[0, 1], &lim).is_err());
    }
}
