//! Experiment drivers behind the command-line tool: problem construction,
//! parameter sweeps, summary statistics and CSV tables.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::PathBuf;

use crate::blocks::ProblemSpec;
use crate::curvature::{incoherence_bound, CurvatureReport, EnumerationLimits, QuadraticModel};
use crate::engine::{
    collision_expected_calls, collision_simulate, solve, solve_spec, within_two_tau_floor, DelayModel, Mode, RunResult,
    SolveFailure, SolverConfig, StopRule, Stragglers,
};
use crate::error::{Error, Result};
use crate::problems::data::{read_gfl_csv, read_svm_chain_csv, read_svm_multiclass_csv};
use crate::problems::{
    block_diagonal, gfl_synthetic, random_coupled, svm_synthetic_chain, svm_synthetic_multiclass, GflProblem,
    QuadraticProblem, StructSvm,
};
use crate::sampling::stream_rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum ProblemKind {
    #[default]
    Quadratic,
    Gfl,
    SvmMulticlass,
    SvmChain,
}

impl ProblemKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "quadratic" => ProblemKind::Quadratic,
            "gfl" => ProblemKind::Gfl,
            "svm-multiclass" => ProblemKind::SvmMulticlass,
            "svm-chain" => ProblemKind::SvmChain,
            _ => return Err(Error::InvalidConfig(format!("unknown problem {s:?}"))),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::Quadratic => "quadratic",
            ProblemKind::Gfl => "gfl",
            ProblemKind::SvmMulticlass => "svm-multiclass",
            ProblemKind::SvmChain => "svm-chain",
        }
    }
}

/// What to build. Synthetic unless `data` points at a CSV file.
#[derive(Clone, Debug, PartialEq)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    /// Blocks for quadratics, time points for GFL, examples for SVMs.
    pub n: usize,
    /// Simplex dimension for quadratics, signal dimension for GFL,
    /// feature dimension for SVMs.
    pub d: usize,
    /// Regularization; `None` picks 0.01 for GFL and `1/n` for SVMs.
    pub lambda: Option<f64>,
    /// Classes, or chain states.
    pub classes: usize,
    pub chain_length: usize,
    /// Off-diagonal Hessian scale of random quadratics; 0 is block diagonal.
    pub coupling: f64,
    pub segments: usize,
    /// Noise level of synthetic GFL signals and chain features.
    pub sigma: f64,
    pub seed: u64,
    pub data: Option<PathBuf>,
}

impl Default for ProblemConfig {
    fn default() -> Self {
        Self {
            kind: ProblemKind::Quadratic,
            n: 100,
            d: 10,
            lambda: None,
            classes: 8,
            chain_length: 4,
            coupling: 0.0,
            segments: 5,
            sigma: 0.5,
            seed: 0,
            data: None,
        }
    }
}

impl fmt::Display for ProblemConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "problem={} n={} d={} lambda={:?} classes={} chain_length={} coupling={} segments={} sigma={} problem_seed={} data={:?}",
            self.kind.name(),
            self.n,
            self.d,
            self.lambda,
            self.classes,
            self.chain_length,
            self.coupling,
            self.segments,
            self.sigma,
            self.seed,
            self.data
        )
    }
}

/// A constructed problem instance.
pub enum Built {
    Quadratic(QuadraticProblem),
    Gfl(GflProblem),
    Svm(StructSvm),
}

fn strip<S>(r: RunResult<S>) -> RunResult<()> {
    RunResult {
        trace: r.trace,
        state: (),
        stop: r.stop,
        iterations: r.iterations,
        applied: r.applied,
        solves: r.solves,
        dropped_delay: r.dropped_delay,
        dropped_collision: r.dropped_collision,
        wallclock_ms: r.wallclock_ms,
    }
}

impl ProblemConfig {
    pub fn build(&self) -> Result<Built> {
        let open = |p: &PathBuf| -> Result<BufReader<File>> { Ok(BufReader::new(File::open(p)?)) };
        Ok(match self.kind {
            ProblemKind::Quadratic => {
                if self.data.is_some() {
                    return Err(Error::InvalidConfig("quadratics are synthetic only".into()));
                }
                if self.coupling == 0.0 {
                    Built::Quadratic(block_diagonal(self.n, self.d, self.seed)?)
                } else {
                    Built::Quadratic(random_coupled(self.n, self.d, self.coupling, self.seed)?)
                }
            }
            ProblemKind::Gfl => {
                let lambda = self.lambda.unwrap_or(0.01);
                match &self.data {
                    Some(p) => Built::Gfl(read_gfl_csv(open(p)?, lambda)?),
                    None => Built::Gfl(gfl_synthetic(self.d, self.n, self.segments, self.sigma, lambda, self.seed)?),
                }
            }
            ProblemKind::SvmMulticlass => {
                let lambda = self.lambda.unwrap_or(1.0 / self.n as f64);
                match &self.data {
                    Some(p) => Built::Svm(read_svm_multiclass_csv(open(p)?, None, lambda)?),
                    None => Built::Svm(svm_synthetic_multiclass(self.n, self.classes, self.d, lambda, self.seed)?),
                }
            }
            ProblemKind::SvmChain => {
                let lambda = self.lambda.unwrap_or(1.0 / self.n as f64);
                match &self.data {
                    Some(p) => Built::Svm(read_svm_chain_csv(open(p)?, None, lambda)?),
                    None => Built::Svm(svm_synthetic_chain(
                        self.n,
                        self.chain_length,
                        self.classes,
                        self.d,
                        self.sigma,
                        lambda,
                        self.seed,
                    )?),
                }
            }
        })
    }
}

impl Built {
    pub fn num_blocks(&self) -> usize {
        match self {
            Built::Quadratic(q) => ProblemSpec::num_blocks(q),
            Built::Gfl(g) => ProblemSpec::num_blocks(g),
            Built::Svm(s) => s.num_examples(),
        }
    }

    /// Runs `cfg.mode` and drops the final state.
    pub fn run(&self, cfg: &SolverConfig) -> std::result::Result<RunResult<()>, SolveFailure> {
        match self {
            Built::Quadratic(q) => solve_spec(q, cfg).map(strip),
            Built::Gfl(g) => solve_spec(g, cfg).map(strip),
            Built::Svm(s) => solve(s, cfg).map(strip),
        }
    }

    /// Objective at the starting point.
    pub fn initial_objective(&self) -> f64 {
        match self {
            Built::Quadratic(q) => ProblemSpec::objective(q, &q.initial_point()),
            Built::Gfl(g) => ProblemSpec::objective(g, &g.initial_point()),
            Built::Svm(s) => s.dual_objective(&s.initial_state()),
        }
    }

    /// Calls `f` with the block-quadratic view of the objective. Structured
    /// SVMs are expanded explicitly, up to `max_outputs` outputs per example.
    pub fn with_model<T>(&self, max_outputs: usize, f: impl FnOnce(&dyn QuadraticModel) -> Result<T>) -> Result<T> {
        match self {
            Built::Quadratic(q) => f(q),
            Built::Gfl(g) => f(g),
            Built::Svm(s) => f(&s.to_quadratic(max_outputs)?),
        }
    }
}

/// Rows of strings under a header, preceded by a `# ` config comment.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub config: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(config: String, header: &[&str]) -> Self {
        Self { config, header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "# {}", self.config)?;
        let mut w = csv::Writer::from_writer(out);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

impl fmt::Display for Table {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut width: Vec<usize> = self.header.iter().map(String::len).collect();
        for r in &self.rows {
            for (w, c) in width.iter_mut().zip(r) {
                *w = (*w).max(c.len());
            }
        }
        let line = |f: &mut fmt::Formatter<'_>, cells: &[String]| -> fmt::Result {
            let parts: Vec<String> = cells.iter().zip(&width).map(|(c, w)| format!("{c:>w$}")).collect();
            writeln!(f, "{}", parts.join("  "))
        };
        line(f, &self.header)?;
        for r in &self.rows {
            line(f, r)?;
        }
        Ok(())
    }
}

/// Median of the values, with `None` (did not finish) sorting last.
pub fn median(values: &[Option<f64>]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| match (a, b) {
        (Some(x), Some(y)) => x.total_cmp(y),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => std::cmp::Ordering::Equal,
    });
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        Some((v[m - 1]? + v[m]?) / 2.0)
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x}")).unwrap_or_else(|| "DNF".into())
}

/// Warning printed before runs whose trajectories depend on scheduling.
pub fn nondeterminism_banner(mode: Mode) -> Option<String> {
    mode.is_nondeterministic().then(|| {
        format!("note: mode {} uses real threads; results vary between runs even with a fixed seed", mode.name())
    })
}

/// Quantity compared against speedup thresholds.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    /// `(f - f*) / (f_0 - f*)` with `f*` from the exact minimum.
    RelativeSuboptimality { fstar: f64, f0: f64 },
    /// Moving average of the batch gap estimate.
    GapEstimate,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedupSpec {
    pub taus: Vec<usize>,
    pub thresholds: Vec<f64>,
    pub seeds: Vec<u64>,
    pub max_iters: u64,
    /// Face limit of the exact minimization used for `f*`.
    pub max_faces: usize,
}

impl Default for SpeedupSpec {
    fn default() -> Self {
        Self {
            taus: vec![1, 2, 4, 8, 16],
            thresholds: vec![1e-3],
            seeds: (0..5).collect(),
            max_iters: 10_000_000,
            max_faces: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedupRun {
    pub tau: usize,
    pub threshold: f64,
    pub seed: u64,
    /// Server iterations until the threshold was met; `None` if never.
    pub iterations: Option<u64>,
    pub epochs: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpeedupSummary {
    pub tau: usize,
    pub threshold: f64,
    pub median_iterations: Option<f64>,
    pub median_epochs: Option<f64>,
    /// Median iterations at the smallest batch size over the median here.
    pub speedup: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct SpeedupResult {
    pub target: Target,
    pub runs: Vec<SpeedupRun>,
    pub summary: Vec<SpeedupSummary>,
    pub config: String,
}

impl SpeedupResult {
    pub fn speedup(&self, tau: usize, threshold: f64) -> Option<f64> {
        self.summary.iter().find(|s| s.tau == tau && s.threshold == threshold).and_then(|s| s.speedup)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(self.config.clone(), &["tau", "threshold", "seed", "iterations", "epochs", "speedup"]);
        for r in &self.runs {
            t.push(vec![
                r.tau.to_string(),
                r.threshold.to_string(),
                r.seed.to_string(),
                opt(r.iterations.map(|v| v as f64)),
                opt(r.epochs),
                String::new(),
            ]);
        }
        for s in &self.summary {
            t.push(vec![
                s.tau.to_string(),
                s.threshold.to_string(),
                "median".into(),
                opt(s.median_iterations),
                opt(s.median_epochs),
                opt(s.speedup),
            ]);
        }
        t
    }
}

/// Iterations to reach each threshold as a function of the batch size.
///
/// Quadratics are measured by relative suboptimality against their exact
/// minimum, other problems by the gap estimate. Each `(tau, seed)` is one
/// run that stops at the smallest threshold; larger thresholds are read off
/// its trace.
pub fn cmd_speedup(problem: &ProblemConfig, base: &SolverConfig, spec: &SpeedupSpec) -> Result<SpeedupResult> {
    if spec.taus.is_empty() || spec.thresholds.is_empty() || spec.seeds.is_empty() {
        return Err(Error::InvalidConfig("speedup needs batch sizes, thresholds and seeds".into()));
    }
    let built = problem.build()?;
    let n = built.num_blocks();
    let target = match &built {
        Built::Quadratic(q) => {
            let (fstar, _) = q.exact_minimum(spec.max_faces)?;
            let f0 = built.initial_objective();
            if !(f0 - fstar > 0.0) {
                return Err(Error::InvalidConfig("starting point is already optimal".into()));
            }
            Target::RelativeSuboptimality { fstar, f0 }
        }
        _ => Target::GapEstimate,
    };
    let smallest = spec.thresholds.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut runs = Vec::new();
    for &tau in &spec.taus {
        for &seed in &spec.seeds {
            let mut cfg = base.clone();
            cfg.tau = tau;
            cfg.seed = seed;
            cfg.trace_every = 1;
            cfg.full_gap_every = Some(u64::MAX);
            cfg.stop = StopRule { max_iters: Some(spec.max_iters), ..Default::default() };
            match target {
                Target::RelativeSuboptimality { fstar, f0 } => {
                    cfg.stop.objective_target = Some(fstar + smallest * (f0 - fstar));
                }
                Target::GapEstimate => cfg.stop.gap_est = Some(smallest),
            }
            let r = built.run(&cfg)?;
            for &threshold in &spec.thresholds {
                let hit = r.trace.records.iter().find(|rec| match target {
                    Target::RelativeSuboptimality { fstar, f0 } => rec.primal - fstar <= threshold * (f0 - fstar),
                    Target::GapEstimate => rec.gap_est_avg.is_some_and(|g| g <= threshold),
                });
                runs.push(SpeedupRun {
                    tau,
                    threshold,
                    seed,
                    iterations: hit.map(|h| h.iter),
                    epochs: hit.map(|h| h.epoch),
                });
            }
        }
    }
    let reference = *spec.taus.iter().min().unwrap();
    let mut summary = Vec::new();
    for &threshold in &spec.thresholds {
        let med = |tau: usize, f: &dyn Fn(&SpeedupRun) -> Option<f64>| {
            let v: Vec<Option<f64>> = runs.iter().filter(|r| r.tau == tau && r.threshold == threshold).map(f).collect();
            median(&v)
        };
        let base_med = med(reference, &|r| r.iterations.map(|v| v as f64));
        for &tau in &spec.taus {
            let m = med(tau, &|r| r.iterations.map(|v| v as f64));
            summary.push(SpeedupSummary {
                tau,
                threshold,
                median_iterations: m,
                median_epochs: med(tau, &|r| r.epochs),
                speedup: match (base_med, m) {
                    (Some(b), Some(m)) if m > 0.0 => Some(b / m),
                    (Some(_), Some(_)) => Some(f64::INFINITY),
                    _ => None,
                },
            });
        }
    }
    let config = format!(
        "speedup {problem} blocks={n} {base} taus={:?} thresholds={:?} seeds={:?} target={target:?}",
        spec.taus, spec.thresholds, spec.seeds
    );
    Ok(SpeedupResult { target, runs, summary, config })
}

/// Straggler settings to sweep.
#[derive(Clone, Debug, PartialEq)]
pub enum StragglerGrid {
    /// One slow worker with each of these return probabilities.
    Single(Vec<f64>),
    /// `p_i = theta + i / T` for each of these `theta`.
    Heterogeneous(Vec<f64>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct StragglerSpec {
    pub grid: StragglerGrid,
    pub runs: usize,
    /// Data passes per run.
    pub epochs: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StragglerRun {
    /// `None` for the all-full-speed anchor.
    pub param: Option<f64>,
    pub run: usize,
    pub wallclock_ms: f64,
    pub epochs: f64,
    pub time_per_pass_ms: f64,
}

#[derive(Clone, Debug)]
pub struct StragglerResult {
    pub mode: Mode,
    pub runs: Vec<StragglerRun>,
    /// `(param, median time per pass / anchor median)`.
    pub normalized: Vec<(Option<f64>, f64)>,
    pub config: String,
}

impl StragglerResult {
    pub fn normalized_at(&self, param: Option<f64>) -> Option<f64> {
        self.normalized.iter().find(|(p, _)| *p == param).map(|(_, v)| *v)
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(
            self.config.clone(),
            &["mode", "param", "run", "wallclock_ms", "epochs", "time_per_pass_ms", "normalized"],
        );
        let label = |p: Option<f64>| p.map(|v| v.to_string()).unwrap_or_else(|| "none".into());
        for r in &self.runs {
            t.push(vec![
                self.mode.name().into(),
                label(r.param),
                r.run.to_string(),
                format!("{:.3}", r.wallclock_ms),
                format!("{:.4}", r.epochs),
                format!("{:.4}", r.time_per_pass_ms),
                String::new(),
            ]);
        }
        for (p, v) in &self.normalized {
            t.push(vec![
                self.mode.name().into(),
                label(*p),
                "median".into(),
                String::new(),
                String::new(),
                String::new(),
                format!("{v:.4}"),
            ]);
        }
        t
    }
}

/// Time per effective data pass under stragglers, normalized by the median
/// of the runs without stragglers. Uses `base.mode`, `base.tau`,
/// `base.workers` and `base.solve_time`.
pub fn cmd_straggler(problem: &ProblemConfig, base: &SolverConfig, spec: &StragglerSpec) -> Result<StragglerResult> {
    if spec.runs == 0 || !(spec.epochs > 0.0) {
        return Err(Error::InvalidConfig("straggler sweep needs runs and a positive epoch count".into()));
    }
    let built = problem.build()?;
    let n = built.num_blocks();
    let mut settings: Vec<(Option<f64>, Stragglers)> = vec![(None, Stragglers::None)];
    match &spec.grid {
        StragglerGrid::Single(ps) => settings.extend(ps.iter().map(|&p| (Some(p), Stragglers::Single { p }))),
        StragglerGrid::Heterogeneous(ts) => {
            settings.extend(ts.iter().map(|&theta| (Some(theta), Stragglers::Heterogeneous { theta })))
        }
    }
    let mut runs = Vec::new();
    for (param, stragglers) in &settings {
        for run in 0..spec.runs {
            let mut cfg = base.clone();
            cfg.stragglers = stragglers.clone();
            cfg.seed = base.seed + run as u64;
            cfg.stop = StopRule { max_epochs: Some(spec.epochs), ..Default::default() };
            cfg.full_gap_every = Some(u64::MAX);
            cfg.trace_every = n.div_ceil(cfg.tau) as u64;
            let r = built.run(&cfg)?;
            let epochs = r.applied as f64 / n as f64;
            runs.push(StragglerRun {
                param: *param,
                run,
                wallclock_ms: r.wallclock_ms,
                epochs,
                time_per_pass_ms: r.wallclock_ms / epochs,
            });
        }
    }
    let med = |param: Option<f64>| {
        let v: Vec<Option<f64>> = runs.iter().filter(|r| r.param == param).map(|r| Some(r.time_per_pass_ms)).collect();
        median(&v).unwrap()
    };
    let anchor = med(None);
    let normalized = settings.iter().map(|(p, _)| (*p, med(*p) / anchor)).collect();
    let config =
        format!("straggler {problem} blocks={n} {base} grid={:?} runs={} epochs={}", spec.grid, spec.runs, spec.epochs);
    Ok(StragglerResult { mode: base.mode, runs, normalized, config })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DelayDist {
    #[default]
    Poisson,
    Pareto,
}

impl DelayDist {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "poisson" => Ok(DelayDist::Poisson),
            "pareto" => Ok(DelayDist::Pareto),
            _ => Err(Error::InvalidConfig(format!("unknown delay distribution {s:?}"))),
        }
    }

    pub fn model(&self, kappa: f64) -> DelayModel {
        if kappa == 0.0 {
            return DelayModel::None;
        }
        match self {
            DelayDist::Poisson => DelayModel::Poisson { kappa },
            DelayDist::Pareto => DelayModel::Pareto { kappa },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelaySpec {
    pub kappas: Vec<f64>,
    pub dist: DelayDist,
    pub seeds: Vec<u64>,
    /// Gap-estimate target.
    pub threshold: f64,
    pub max_iters: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelayRun {
    pub kappa: f64,
    pub seed: u64,
    pub iterations: Option<u64>,
    pub dropped_delay: u64,
}

#[derive(Clone, Debug)]
pub struct DelayResult {
    pub dist: DelayDist,
    pub runs: Vec<DelayRun>,
    /// `(kappa, median iterations, median / median at the first kappa)`.
    pub summary: Vec<(f64, Option<f64>, Option<f64>)>,
    pub config: String,
}

impl DelayResult {
    pub fn ratio(&self, kappa: f64) -> Option<f64> {
        self.summary.iter().find(|s| s.0 == kappa).and_then(|s| s.2)
    }

    pub fn all_converged(&self, kappa: f64) -> bool {
        self.runs.iter().filter(|r| r.kappa == kappa).all(|r| r.iterations.is_some())
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(self.config.clone(), &["kappa", "dist", "seed", "iterations", "dropped_delay", "ratio"]);
        let dist = format!("{:?}", self.dist).to_lowercase();
        for r in &self.runs {
            t.push(vec![
                r.kappa.to_string(),
                dist.clone(),
                r.seed.to_string(),
                opt(r.iterations.map(|v| v as f64)),
                r.dropped_delay.to_string(),
                String::new(),
            ]);
        }
        for (kappa, m, ratio) in &self.summary {
            t.push(vec![kappa.to_string(), dist.clone(), "median".into(), opt(*m), String::new(), opt(*ratio)]);
        }
        t
    }
}

/// Iterations until the gap estimate reaches the threshold, per expected
/// delay, in the seeded event simulation.
pub fn cmd_delay(problem: &ProblemConfig, base: &SolverConfig, spec: &DelaySpec) -> Result<DelayResult> {
    if spec.kappas.is_empty() || spec.seeds.is_empty() {
        return Err(Error::InvalidConfig("delay sweep needs delays and seeds".into()));
    }
    let built = problem.build()?;
    let n = built.num_blocks();
    let mut runs = Vec::new();
    for &kappa in &spec.kappas {
        for &seed in &spec.seeds {
            let mut cfg = base.clone();
            cfg.mode = Mode::AsyncEventSim;
            cfg.delay = spec.dist.model(kappa);
            cfg.seed = seed;
            cfg.stop =
                StopRule { gap_est: Some(spec.threshold), max_iters: Some(spec.max_iters), ..Default::default() };
            cfg.full_gap_every = Some(u64::MAX);
            cfg.trace_every = n.div_ceil(cfg.tau) as u64;
            let r = built.run(&cfg)?;
            let done = r.stop == crate::engine::StopReason::GapEstimate;
            runs.push(DelayRun {
                kappa,
                seed,
                iterations: done.then_some(r.iterations),
                dropped_delay: r.dropped_delay,
            });
        }
    }
    let med = |kappa: f64| {
        let v: Vec<Option<f64>> =
            runs.iter().filter(|r| r.kappa == kappa).map(|r| r.iterations.map(|i| i as f64)).collect();
        median(&v)
    };
    let anchor = med(spec.kappas[0]);
    let summary = spec
        .kappas
        .iter()
        .map(|&k| {
            let m = med(k);
            let ratio = match (m, anchor) {
                (Some(m), Some(a)) if a > 0.0 => Some(m / a),
                _ => None,
            };
            (k, m, ratio)
        })
        .collect();
    let config = format!(
        "delay {problem} blocks={n} {base} kappas={:?} dist={:?} seeds={:?} threshold={}",
        spec.kappas, spec.dist, spec.seeds, spec.threshold
    );
    Ok(DelayResult { dist: spec.dist, runs, summary, config })
}

/// Curvature report over a batch-size grid. Group fused lasso problems get
/// their closed-form expected curvature and the coarse `4 tau lambda^2 d`
/// bound as extra columns; every report also carries the bound with the
/// largest pairwise incoherence.
pub fn cmd_curvature(
    problem: &ProblemConfig,
    taus: &[usize],
    limits: &EnumerationLimits,
    max_outputs: usize,
) -> Result<CurvatureReport> {
    let built = problem.build()?;
    let report = built.with_model(max_outputs, |m| CurvatureReport::build(m, taus, limits))?;
    let (b, mu_max) = (report.incoherence.b_mean, report.incoherence.mu_max());
    let mut report = report.with_bound("bound_mu_max", |tau| incoherence_bound(tau, b, mu_max));
    if let Built::Gfl(g) = &built {
        let (l2d, blocks) = (g.lambda() * g.lambda() * g.dim() as f64, (g.time_points() - 1) as f64);
        // B <= 2 l2d and mu <= l2d; only neighbouring blocks interact, and a
        // size-tau subset holds 2 tau (tau - 1) / N neighbouring ordered pairs on average
        report = report
            .with_bound("closed_form", |tau| g.expected_set_curvature(tau))
            .with_bound("generic", |tau| incoherence_bound(tau, 2.0 * l2d, l2d))
            .with_bound("adjacency", |tau| {
                let t = tau as f64;
                4.0 * (2.0 * t * l2d + 2.0 * t * (t - 1.0) / blocks * l2d)
            })
            .with_bound("coarse", |tau| 4.0 * tau as f64 * l2d);
    }
    Ok(report)
}

/// Draw-count simulation against the expected-count formula.
pub fn cmd_collision(pairs: &[(usize, usize)], trials: usize, seed: u64) -> Result<Table> {
    let mut t = Table::new(
        format!("collision pairs={pairs:?} trials={trials} seed={seed}"),
        &["n", "tau", "formula", "mean", "stderr", "z", "median", "q90", "q99", "within_2tau", "floor_2tau"],
    );
    for (k, &(n, tau)) in pairs.iter().enumerate() {
        let formula = collision_expected_calls(n, tau)?;
        let mut rng = stream_rng(seed, k as u64);
        let s = collision_simulate(n, tau, trials, &mut rng)?;
        let z = if s.stderr > 0.0 { (s.mean - formula) / s.stderr } else { 0.0 };
        let floor = if 2 * tau <= n { format!("{:.4}", within_two_tau_floor(n)) } else { String::new() };
        t.push(vec![
            n.to_string(),
            tau.to_string(),
            format!("{formula:.6}"),
            format!("{:.6}", s.mean),
            format!("{:.6}", s.stderr),
            format!("{z:.3}"),
            format!("{}", s.median),
            format!("{}", s.q90),
            format!("{}", s.q99),
            format!("{:.4}", s.within_two_tau),
            floor,
        ]);
    }
    Ok(t)
}

/// Runs one solve; the trace is returned even when the run fails.
pub fn cmd_solve(
    problem: &ProblemConfig,
    cfg: &SolverConfig,
) -> Result<std::result::Result<RunResult<()>, SolveFailure>> {
    let built = problem.build()?;
    let mut r = built.run(cfg);
    let prefix = format!("solve {problem}");
    match &mut r {
        Ok(ok) => ok.trace.config = format!("{prefix} {}", ok.trace.config),
        Err(e) => e.trace.config = format!("{prefix} {}", e.trace.config),
    }
    Ok(r)
}

/// Expands a `--config <file>` of `key=value` lines into flags placed
/// right after the subcommand, so that flags given explicitly come later
/// and win. `#` starts a comment; `key=true` becomes a bare switch and
/// `key=false` is skipped.
pub fn merge_config_args(args: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    let mut rest = Vec::with_capacity(args.len());
    let mut it = args.into_iter();
    while let Some(a) = it.next() {
        if a == "--config" {
            path = Some(it.next().ok_or_else(|| Error::InvalidConfig("--config needs a path".into()))?);
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(p.to_string());
        } else {
            rest.push(a);
        }
    }
    let Some(path) = path else { return Ok(rest) };
    let text = std::fs::read_to_string(&path)?;
    let mut extra = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("{path}:{}: expected key=value", lineno + 1)))?;
        let (k, v) = (k.trim().replace('_', "-"), v.trim());
        match v {
            "true" => extra.push(format!("--{k}")),
            "false" => {}
            _ => {
                extra.push(format!("--{k}"));
                extra.push(v.to_string());
            }
        }
    }
    let split = rest.len().min(2);
    let mut out: Vec<String> = rest[..split].to_vec();
    out.extend(extra);
    out.extend_from_slice(&rest[split..]);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[Some(3.0), Some(1.0), Some(2.0)]), Some(2.0));
        assert_eq!(median(&[Some(3.0), Some(1.0)]), Some(2.0));
        assert_eq!(median(&[Some(1.0), None, None]), None);
        assert_eq!(median(&[Some(1.0), Some(2.0), None]), Some(2.0));
    }

    #[test]
    fn table_csv_has_comment_and_header() {
        let mut t = Table::new("k=v".into(), &["a", "b"]);
        t.push(vec!["1".into(), "2".into()]);
        let mut out = Vec::new();
        t.write_csv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "# k=v\na,b\n1,2\n");
    }

    #[test]
    fn unit_batch_speedup_is_one() {
        let problem = ProblemConfig { n: 8, d: 3, ..Default::default() };
        let spec = SpeedupSpec { taus: vec![1, 2], thresholds: vec![1e-2], seeds: vec![0, 1, 2], ..Default::default() };
        let r = cmd_speedup(&problem, &SolverConfig::default(), &spec).unwrap();
        assert_eq!(r.speedup(1, 1e-2), Some(1.0));
        assert!(r.speedup(2, 1e-2).unwrap() > 1.0);
    }

    #[test]
    fn config_file_goes_before_explicit_flags() {
        let dir = std::env::temp_dir().join(format!("apbcfw-cfg-{}", std::process::id()));
        std::fs::write(&dir, "tau = 4\n# comment\nline_search=true\ndrop-rule=false\n").unwrap();
        let args: Vec<String> =
            ["bin", "solve", "--config", dir.to_str().unwrap(), "--tau", "2"].iter().map(|s| s.to_string()).collect();
        let merged = merge_config_args(args).unwrap();
        std::fs::remove_file(&dir).unwrap();
        assert_eq!(merged, ["bin", "solve", "--tau", "4", "--line-search", "--tau", "2"]);
    }

    #[test]
    fn collision_table() {
        let t = cmd_collision(&[(4, 3)], 20_000, 1).unwrap();
        let z: f64 = t.rows[0][t.column("z").unwrap()].parse().unwrap();
        assert!(z.abs() < 4.0);
    }
}
