//! Structured SVM dual with implicit dual variables: each block is a
//! distribution over the outputs of one training example, represented by its
//! primal contribution `w_i` and loss sum `l_i`.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::blocks::BlockDomain;
use crate::error::{Error, Result};
use crate::problems::quadratic::QuadraticProblem;

/// Output structure of the examples.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LabelKind {
    /// One of `classes` labels, 0-1 loss.
    Multiclass { classes: usize },
    /// A label in `0..states` per position, unary and transition features,
    /// Hamming loss divided by the sequence length.
    Chain { states: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmExample {
    /// One feature vector per position; a single one for multiclass.
    pub features: Vec<Vec<f64>>,
    pub label: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct StructSvm {
    examples: Vec<SvmExample>,
    kind: LabelKind,
    feat_dim: usize,
    lambda: f64,
    joint_dim: usize,
    averaging: bool,
}

/// Implicit dual iterate.
#[derive(Clone, Debug, PartialEq)]
pub struct SvmState {
    pub w: Vec<f64>,
    pub wi: Vec<Vec<f64>>,
    pub li: Vec<f64>,
    /// `w` averaged over iterations with weights proportional to `k`, when
    /// averaging is on.
    pub w_avg: Option<Vec<f64>>,
    pub(crate) updates: u64,
    pub(crate) batches: u64,
}

impl SvmState {
    /// Recomputes `w = sum_i w_i`.
    pub fn refresh(&mut self) {
        self.w.iter_mut().for_each(|v| *v = 0.0);
        for wi in &self.wi {
            self.w.iter_mut().zip(wi).for_each(|(a, b)| *a += b);
        }
    }

    /// Averaged weights when kept, the current ones otherwise.
    pub fn weights(&self) -> &[f64] {
        self.w_avg.as_deref().unwrap_or(&self.w)
    }

    // w_avg <- k/(k+2) w_avg + 2/(k+2) w after batch k
    pub(crate) fn push_average(&mut self) {
        if let Some(avg) = &mut self.w_avg {
            let rho = 2.0 / (self.batches as f64 + 2.0);
            avg.iter_mut().zip(&self.w).for_each(|(a, w)| *a = (1.0 - rho) * *a + rho * w);
        }
        self.batches += 1;
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl StructSvm {
    pub fn new(examples: Vec<SvmExample>, kind: LabelKind, lambda: f64) -> Result<Self> {
        if examples.is_empty() {
            return Err(Error::InvalidConfig("no training examples".into()));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!("regularization {lambda} must be positive")));
        }
        let feat_dim = examples[0].features.first().map(Vec::len).unwrap_or(0);
        let k = match kind {
            LabelKind::Multiclass { classes } => classes,
            LabelKind::Chain { states } => states,
        };
        if k == 0 || feat_dim == 0 {
            return Err(Error::InvalidConfig("need at least one label and one feature".into()));
        }
        for (i, ex) in examples.iter().enumerate() {
            let positions_ok = match kind {
                LabelKind::Multiclass { .. } => ex.features.len() == 1 && ex.label.len() == 1,
                LabelKind::Chain { .. } => !ex.label.is_empty() && ex.features.len() == ex.label.len(),
            };
            if !positions_ok
                || ex.features.iter().any(|f| f.len() != feat_dim || f.iter().any(|v| !v.is_finite()))
                || ex.label.iter().any(|&y| y >= k)
            {
                return Err(Error::Data(format!("example {i} is malformed")));
            }
        }
        let joint_dim = match kind {
            LabelKind::Multiclass { classes } => classes * feat_dim,
            LabelKind::Chain { states } => states * feat_dim + states * states,
        };
        Ok(Self { examples, kind, feat_dim, lambda, joint_dim, averaging: false })
    }

    /// Keep a weighted average of `w` alongside the iterate.
    pub fn with_averaging(mut self, on: bool) -> Self {
        self.averaging = on;
        self
    }

    pub fn num_examples(&self) -> usize {
        self.examples.len()
    }

    pub fn examples(&self) -> &[SvmExample] {
        &self.examples
    }

    pub fn kind(&self) -> LabelKind {
        self.kind
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn feature_dim(&self) -> usize {
        self.feat_dim
    }

    /// Dimension of `w`.
    pub fn joint_dim(&self) -> usize {
        self.joint_dim
    }

    fn states(&self) -> usize {
        match self.kind {
            LabelKind::Multiclass { classes } => classes,
            LabelKind::Chain { states } => states,
        }
    }

    /// Joint feature map `phi(x_i, y)`.
    pub fn joint_feature(&self, i: usize, y: &[usize]) -> Vec<f64> {
        let d = self.feat_dim;
        let k = self.states();
        let ex = &self.examples[i];
        let mut phi = vec![0.0; self.joint_dim];
        for (p, &yp) in y.iter().enumerate() {
            phi[yp * d..(yp + 1) * d].iter_mut().zip(&ex.features[p]).for_each(|(a, b)| *a += b);
        }
        if let LabelKind::Chain { .. } = self.kind {
            for w in y.windows(2) {
                phi[k * d + w[0] * k + w[1]] += 1.0;
            }
        }
        phi
    }

    /// `psi_i(y) = phi(x_i, y_i) - phi(x_i, y)`.
    pub fn psi(&self, i: usize, y: &[usize]) -> Vec<f64> {
        let a = self.joint_feature(i, &self.examples[i].label);
        let b = self.joint_feature(i, y);
        a.iter().zip(&b).map(|(p, q)| p - q).collect()
    }

    /// Task loss `L_i(y)`.
    pub fn loss(&self, i: usize, y: &[usize]) -> f64 {
        let truth = &self.examples[i].label;
        let wrong = truth.iter().zip(y).filter(|(a, b)| a != b).count();
        wrong as f64 / truth.len() as f64
    }

    /// `H_i(y; w) = L_i(y) - <w, psi_i(y)>`.
    pub fn h_value(&self, i: usize, y: &[usize], w: &[f64]) -> f64 {
        self.loss(i, y) - dot(w, &self.psi(i, y))
    }

    fn unary(&self, w: &[f64], x: &[f64], state: usize) -> f64 {
        let d = self.feat_dim;
        dot(&w[state * d..(state + 1) * d], x)
    }

    /// `argmax_y H_i(y; w)`; ties go to the lexicographically smallest output.
    pub fn max_oracle(&self, i: usize, w: &[f64]) -> Vec<usize> {
        let ex = &self.examples[i];
        let k = self.states();
        let len = ex.label.len();
        let per_pos = 1.0 / len as f64;
        let node =
            |p: usize, s: usize| self.unary(w, &ex.features[p], s) + if s != ex.label[p] { per_pos } else { 0.0 };
        match self.kind {
            LabelKind::Multiclass { .. } => {
                let mut best = 0;
                let mut best_v = node(0, 0);
                for s in 1..k {
                    let v = node(0, s);
                    if v > best_v {
                        best = s;
                        best_v = v;
                    }
                }
                vec![best]
            }
            LabelKind::Chain { .. } => {
                let tr = |a: usize, b: usize| w[k * self.feat_dim + a * k + b];
                // suffix[p][s]: best score of positions p.. given y_p = s
                let mut suffix = vec![vec![0.0; k]; len];
                for s in 0..k {
                    suffix[len - 1][s] = node(len - 1, s);
                }
                for p in (0..len - 1).rev() {
                    for s in 0..k {
                        let next = (0..k).map(|t| tr(s, t) + suffix[p + 1][t]).fold(f64::NEG_INFINITY, f64::max);
                        suffix[p][s] = node(p, s) + next;
                    }
                }
                let mut y = Vec::with_capacity(len);
                let first = argmax_first((0..k).map(|s| suffix[0][s]));
                y.push(first);
                for p in 1..len {
                    let prev = y[p - 1];
                    y.push(argmax_first((0..k).map(|t| tr(prev, t) + suffix[p][t])));
                }
                y
            }
        }
    }

    /// Dual start: every block at the corner of its true output.
    pub fn initial_state(&self) -> SvmState {
        let n = self.num_examples();
        SvmState {
            w: vec![0.0; self.joint_dim],
            wi: vec![vec![0.0; self.joint_dim]; n],
            li: vec![0.0; n],
            w_avg: self.averaging.then(|| vec![0.0; self.joint_dim]),
            updates: 0,
            batches: 0,
        }
    }

    /// Moves block `i` towards the corner of output `y` with step `gamma`.
    pub fn block_update(&self, state: &mut SvmState, i: usize, y: &[usize], gamma: f64) {
        let n = self.num_examples() as f64;
        let scale = 1.0 / (self.lambda * n);
        let psi = self.psi(i, y);
        let loss = self.loss(i, y) / n;
        let wi = &mut state.wi[i];
        for ((w, wi), p) in state.w.iter_mut().zip(wi.iter_mut()).zip(&psi) {
            let delta = gamma * (p * scale - *wi);
            *wi += delta;
            *w += delta;
        }
        state.li[i] = (1.0 - gamma) * state.li[i] + gamma * loss;
        state.updates += 1;
        if state.updates.is_multiple_of(self.num_examples() as u64) {
            state.refresh();
        }
    }

    /// Block gap `H_i(y*; w) / n + lambda <w, w_i> - l_i` at the oracle output.
    pub fn block_gap(&self, state: &SvmState, i: usize, y_star: &[usize]) -> f64 {
        let n = self.num_examples() as f64;
        self.h_value(i, y_star, &state.w) / n + self.lambda * dot(&state.w, &state.wi[i]) - state.li[i]
    }

    /// Dual objective being minimized, `lambda/2 ||w||^2 - sum_i l_i`.
    pub fn dual_objective(&self, state: &SvmState) -> f64 {
        0.5 * self.lambda * dot(&state.w, &state.w) - state.li.iter().sum::<f64>()
    }

    /// SVM primal `lambda/2 ||w||^2 + 1/n sum_i max_y H_i(y; w)`.
    pub fn primal_objective(&self, w: &[f64]) -> f64 {
        let n = self.num_examples();
        let hinge: f64 = (0..n).map(|i| self.h_value(i, &self.max_oracle(i, w), w)).sum();
        0.5 * self.lambda * dot(w, w) + hinge / n as f64
    }

    /// Optimal step along the batch direction, clipped to `[0, 1]`.
    pub fn line_search(&self, state: &SvmState, batch: &[(usize, Vec<usize>)]) -> f64 {
        let n = self.num_examples() as f64;
        let scale = 1.0 / (self.lambda * n);
        let mut dw = vec![0.0; self.joint_dim];
        let mut dl = 0.0;
        for (i, y) in batch {
            let psi = self.psi(*i, y);
            dw.iter_mut().zip(&psi).zip(&state.wi[*i]).for_each(|((d, p), wi)| *d += p * scale - wi);
            dl += self.loss(*i, y) / n - state.li[*i];
        }
        let denom = self.lambda * dot(&dw, &dw);
        if denom <= 0.0 {
            return 0.0;
        }
        ((dl - self.lambda * dot(&state.w, &dw)) / denom).clamp(0.0, 1.0)
    }

    /// Number of outputs of example `i`.
    pub fn output_count(&self, i: usize) -> Option<usize> {
        (self.states() as u64).checked_pow(self.examples[i].label.len() as u32).and_then(|c| usize::try_from(c).ok())
    }

    /// Output with lexicographic rank `index` for example `i`.
    pub fn output_from_index(&self, i: usize, mut index: usize) -> Vec<usize> {
        let len = self.examples[i].label.len();
        let k = self.states();
        let mut y = vec![0; len];
        for p in (0..len).rev() {
            y[p] = index % k;
            index /= k;
        }
        y
    }

    pub fn output_index(&self, y: &[usize]) -> usize {
        y.iter().fold(0, |acc, &s| acc * self.states() + s)
    }

    /// The dual as an explicit quadratic over one simplex per example,
    /// `1/2 a^T (lambda A^T A) a - b^T a`. Only sensible for tiny instances.
    pub fn to_quadratic(&self, max_outputs: usize) -> Result<QuadraticProblem> {
        let n = self.num_examples();
        let counts: Vec<usize> = (0..n)
            .map(|i| self.output_count(i).filter(|&c| c <= max_outputs))
            .collect::<Option<_>>()
            .ok_or_else(|| Error::Capacity(format!("more than {max_outputs} outputs per example")))?;
        let scale = 1.0 / (self.lambda * n as f64);
        let mut cols: Vec<Vec<f64>> = Vec::new();
        let mut c = Vec::new();
        let mut domains = Vec::with_capacity(n);
        for (i, &m) in counts.iter().enumerate() {
            for idx in 0..m {
                let y = self.output_from_index(i, idx);
                cols.push(self.psi(i, &y).iter().map(|v| v * scale).collect());
                c.push(-self.loss(i, &y) / n as f64);
            }
            domains.push(BlockDomain::simplex(m)?);
        }
        let a = DMatrix::from_fn(self.joint_dim, cols.len(), |r, col| cols[col][r]);
        let h = (a.transpose() * &a) * self.lambda;
        let h = (&h + h.transpose()) * 0.5;
        QuadraticProblem::new(domains, h, c)
    }
}

fn argmax_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = 0;
    let mut best_v = f64::NEG_INFINITY;
    for (k, v) in values.enumerate() {
        if v > best_v {
            best = k;
            best_v = v;
        }
    }
    best
}

fn unit_vector(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|a| a / norm).collect();
        }
    }
}

/// `k` class centroids on the unit sphere; example `i` has class `i mod k`
/// and its class centroid as features.
pub fn svm_synthetic_multiclass(n: usize, k: usize, d: usize, lambda: f64, seed: u64) -> Result<StructSvm> {
    if d < 2 {
        return Err(Error::InvalidConfig("feature dimension must be >= 2".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centroids: Vec<Vec<f64>> = (0..k).map(|_| unit_vector(&mut rng, d)).collect();
    let examples =
        (0..n).map(|i| SvmExample { features: vec![centroids[i % k].clone()], label: vec![i % k] }).collect();
    StructSvm::new(examples, LabelKind::Multiclass { classes: k }, lambda)
}

/// Label sequences from a sticky Markov chain; each position's features are
/// its state centroid plus Gaussian noise.
pub fn svm_synthetic_chain(
    n: usize,
    len: usize,
    states: usize,
    d: usize,
    noise: f64,
    lambda: f64,
    seed: u64,
) -> Result<StructSvm> {
    if len == 0 || states == 0 {
        return Err(Error::InvalidConfig("chains need a length and at least one state".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centroids: Vec<Vec<f64>> = (0..states).map(|_| unit_vector(&mut rng, d)).collect();
    let mut examples = Vec::with_capacity(n);
    for _ in 0..n {
        let mut label = Vec::with_capacity(len);
        let mut s = rng.random_range(0..states);
        for _ in 0..len {
            if rng.random::<f64>() > 0.7 {
                s = rng.random_range(0..states);
            }
            label.push(s);
        }
        let features = label
            .iter()
            .map(|&s| {
                centroids[s]
                    .iter()
                    .map(|c| c + noise * rng.sample::<f64, _>(StandardNormal) / (d as f64).sqrt())
                    .collect()
            })
            .collect();
        examples.push(SvmExample { features, label });
    }
    StructSvm::new(examples, LabelKind::Chain { states }, lambda)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_pick_first_wrong_label() {
        let p = svm_synthetic_multiclass(6, 4, 5, 1.0, 0).unwrap();
        let w = vec![0.0; p.joint_dim()];
        for i in 0..6 {
            let truth = p.examples()[i].label[0];
            let expect = if truth == 0 { 1 } else { 0 };
            assert_eq!(p.max_oracle(i, &w), vec![expect]);
        }
    }

    #[test]
    fn hand_built_weights() {
        let ex = SvmExample { features: vec![vec![1.0, 0.0]], label: vec![0] };
        let p = StructSvm::new(vec![ex], LabelKind::Multiclass { classes: 3 }, 1.0).unwrap();
        // class 2 scores highest
        let w = vec![0.0, 0.0, 0.1, 0.0, 0.5, 0.0];
        let h: Vec<f64> = (0..3).map(|y| p.h_value(0, &[y], &w)).collect();
        assert!(h[2] > h[1] && h[2] > h[0]);
        assert_eq!(p.max_oracle(0, &w), vec![2]);
    }

    #[test]
    fn update_endpoints() {
        let p = svm_synthetic_multiclass(3, 2, 3, 0.5, 1).unwrap();
        let mut s = p.initial_state();
        let before = s.clone();
        p.block_update(&mut s, 1, &[1], 0.0);
        assert_eq!(s.w, before.w);
        assert_eq!(s.wi, before.wi);
        let mut s = p.initial_state();
        p.block_update(&mut s, 1, &[1], 1.0);
        let psi = p.psi(1, &[1]);
        let scale = 1.0 / (0.5 * 3.0);
        for (a, b) in s.wi[1].iter().zip(&psi) {
            assert_eq!(*a, b * scale);
        }
    }

    #[test]
    fn initial_gap_is_scaled_oracle_value() {
        let p = svm_synthetic_multiclass(5, 3, 4, 0.1, 2).unwrap();
        let s = p.initial_state();
        for i in 0..5 {
            let y = p.max_oracle(i, &s.w);
            let g = p.block_gap(&s, i, &y);
            assert!((g - p.h_value(i, &y, &s.w) / 5.0).abs() < 1e-15);
            assert!(g >= 0.0);
        }
    }

    #[test]
    fn unit_features_give_boundedness_two_over_n_squared_lambda() {
        use crate::curvature::{boundedness_incoherence, EnumerationLimits};
        let (n, lambda) = (6, 0.3);
        let p = svm_synthetic_multiclass(n, 3, 8, lambda, 3).unwrap();
        let q = p.to_quadratic(16).unwrap();
        let inc = boundedness_incoherence(&q, &EnumerationLimits::default()).unwrap();
        let expect = 2.0 / (n as f64 * n as f64 * lambda);
        assert!((inc.b_mean - expect).abs() < 1e-12, "{} vs {expect}", inc.b_mean);
    }

    #[test]
    fn explicit_quadratic_matches_gap_and_objective() {
        use crate::blocks::{full_gap, ProblemSpec};
        let p = svm_synthetic_chain(3, 2, 2, 3, 0.3, 0.2, 4).unwrap();
        let q = p.to_quadratic(16).unwrap();
        let mut s = p.initial_state();
        let mut alpha: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                let mut a = vec![0.0; 4];
                a[p.output_index(&p.examples()[i].label)] = 1.0;
                a
            })
            .collect();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..20 {
            let i = rng.random_range(0..3);
            let y = p.max_oracle(i, &s.w);
            let gamma = rng.random::<f64>();
            p.block_update(&mut s, i, &y, gamma);
            let idx = p.output_index(&y);
            for (j, a) in alpha[i].iter_mut().enumerate() {
                *a = (1.0 - gamma) * *a + if j == idx { gamma } else { 0.0 };
            }
        }
        let x = crate::blocks::BlockVector::from_blocks(alpha);
        assert!((q.objective(&x) - p.dual_objective(&s)).abs() < 1e-12);
        let gaps: f64 = (0..3).map(|i| p.block_gap(&s, i, &p.max_oracle(i, &s.w))).sum();
        assert!((full_gap(&q, &x).unwrap() - gaps).abs() < 1e-12);
        // the gap is also the distance between primal and dual values
        assert!((p.primal_objective(&s.w) + p.dual_objective(&s) - gaps).abs() < 1e-12);
    }
}
