use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use apbcfw::bench::{
    cmd_collision, cmd_curvature, cmd_delay, cmd_solve, cmd_speedup, cmd_straggler, merge_config_args,
    nondeterminism_banner, DelayDist, DelaySpec, ProblemConfig, ProblemKind, SpeedupSpec, StragglerGrid, StragglerSpec,
    Table,
};
use apbcfw::blocks::StepMode;
use apbcfw::curvature::EnumerationLimits;
use apbcfw::engine::{Mode, SolverConfig, StopRule};
use apbcfw::{Error, Result};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

/// Block-coordinate Frank-Wolfe experiments. Every flag can also be given as
/// `key=value` in a file passed with `--config`; explicit flags win.
#[derive(Parser)]
#[command(name = "apbcfw", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct Common {
    #[arg(long, default_value = "quadratic")]
    problem: String,
    #[arg(long, default_value_t = 100)]
    n: usize,
    #[arg(long, default_value_t = 10)]
    d: usize,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, default_value_t = 8)]
    classes: usize,
    #[arg(long, default_value_t = 4)]
    chain_length: usize,
    #[arg(long, default_value_t = 0.0)]
    coupling: f64,
    #[arg(long, default_value_t = 5)]
    segments: usize,
    #[arg(long, default_value_t = 0.5)]
    sigma: f64,
    #[arg(long, default_value_t = 0)]
    problem_seed: u64,
    /// CSV data file instead of a synthetic instance.
    #[arg(long)]
    data: Option<PathBuf>,

    #[arg(long, default_value_t = 1)]
    tau: usize,
    #[arg(long, default_value_t = 1)]
    workers: usize,
    #[arg(long, default_value = "sync")]
    mode: String,
    #[arg(long, default_value_t = 0.0)]
    kappa: f64,
    #[arg(long, default_value = "poisson")]
    dist: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threshold: Option<f64>,
    #[arg(long)]
    line_search: bool,
    #[arg(long)]
    drop_rule: bool,
    /// Duration of one oracle call, in microseconds.
    #[arg(long)]
    solve_time_us: Option<u64>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Iterations to threshold versus batch size.
    Speedup {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
        taus: Vec<usize>,
        #[arg(long, value_delimiter = ',')]
        thresholds: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        seeds: u64,
        #[arg(long, default_value_t = 10_000_000)]
        max_iters: u64,
    },
    /// Time per data pass with slow workers.
    Straggler {
        #[command(flatten)]
        common: Common,
        /// Return probabilities of a single straggler.
        #[arg(long, value_delimiter = ',', conflicts_with = "theta")]
        p: Vec<f64>,
        /// Offsets of heterogeneous return probabilities.
        #[arg(long, value_delimiter = ',')]
        theta: Vec<f64>,
        #[arg(long, default_value_t = 5)]
        runs: usize,
        #[arg(long, default_value_t = 8.0)]
        epochs: f64,
    },
    /// Iterations to a gap target versus expected delay.
    Delay {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,5,10,20")]
        kappas: Vec<f64>,
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 10_000_000)]
        max_iters: u64,
    },
    /// Expected set curvature and its bounds.
    Curvature {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1,2,4")]
        taus: Vec<usize>,
        #[arg(long, default_value_t = 4096)]
        max_directions: u64,
        #[arg(long, default_value_t = 100_000)]
        max_subsets: u64,
        #[arg(long, default_value_t = 10_000)]
        samples: usize,
        #[arg(long, default_value_t = 64)]
        max_outputs: usize,
    },
    /// Draws needed to collect distinct blocks.
    Collision {
        #[command(flatten)]
        common: Common,
        /// `n:tau` pairs.
        #[arg(long, value_delimiter = ',', default_value = "2:2,4:3,100:30,100:60")]
        pairs: Vec<String>,
        #[arg(long, default_value_t = 100_000)]
        trials: usize,
    },
    /// A single run, writing its trace.
    Solve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        max_iters: Option<u64>,
        #[arg(long)]
        max_epochs: Option<f64>,
        #[arg(long)]
        full_gap: Option<f64>,
        #[arg(long)]
        full_gap_every: Option<u64>,
        #[arg(long, default_value_t = 1)]
        trace_every: u64,
    },
}

impl Common {
    fn problem(&self) -> Result<ProblemConfig> {
        Ok(ProblemConfig {
            kind: ProblemKind::parse(&self.problem)?,
            n: self.n,
            d: self.d,
            lambda: self.lambda,
            classes: self.classes,
            chain_length: self.chain_length,
            coupling: self.coupling,
            segments: self.segments,
            sigma: self.sigma,
            seed: self.problem_seed,
            data: self.data.clone(),
        })
    }

    fn solver(&self) -> Result<SolverConfig> {
        let mode = Mode::parse(&self.mode)?;
        if let Some(b) = nondeterminism_banner(mode) {
            eprintln!("{b}");
        }
        Ok(SolverConfig {
            tau: self.tau,
            workers: self.workers,
            mode,
            step: if self.line_search { StepMode::LineSearch } else { StepMode::Schedule },
            delay: DelayDist::parse(&self.dist)?.model(self.kappa),
            drop_rule: self.drop_rule,
            seed: self.seed,
            solve_time: self.solve_time_us.map(Duration::from_micros),
            ..Default::default()
        })
    }

    fn emit(&self, table: &Table) -> Result<()> {
        match &self.out {
            Some(p) => table.write_csv(BufWriter::new(File::create(p)?)),
            None => {
                println!("# {}", table.config);
                print!("{table}");
                Ok(())
            }
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Speedup { common, taus, thresholds, seeds, max_iters } => {
            let spec = SpeedupSpec {
                taus,
                thresholds: if thresholds.is_empty() { vec![common.threshold.unwrap_or(1e-3)] } else { thresholds },
                seeds: (common.seed..common.seed + seeds).collect(),
                max_iters,
                ..Default::default()
            };
            let r = cmd_speedup(&common.problem()?, &common.solver()?, &spec)?;
            common.emit(&r.to_table())
        }
        Cmd::Straggler { common, p, theta, runs, epochs } => {
            let grid = if !theta.is_empty() {
                StragglerGrid::Heterogeneous(theta)
            } else {
                StragglerGrid::Single(if p.is_empty() { vec![0.5, 0.2, 0.1] } else { p })
            };
            let r = cmd_straggler(&common.problem()?, &common.solver()?, &StragglerSpec { grid, runs, epochs })?;
            common.emit(&r.to_table())
        }
        Cmd::Delay { common, kappas, seeds, max_iters } => {
            let spec = DelaySpec {
                kappas,
                dist: DelayDist::parse(&common.dist)?,
                seeds: (common.seed..common.seed + seeds).collect(),
                threshold: common.threshold.unwrap_or(0.1),
                max_iters,
            };
            let r = cmd_delay(&common.problem()?, &common.solver()?, &spec)?;
            common.emit(&r.to_table())
        }
        Cmd::Curvature { common, taus, max_directions, max_subsets, samples, max_outputs } => {
            let limits = EnumerationLimits { max_directions, max_subsets, samples, seed: common.seed };
            let problem = common.problem()?;
            let report = cmd_curvature(&problem, &taus, &limits, max_outputs)?;
            match &common.out {
                Some(p) => {
                    let mut f = BufWriter::new(File::create(p)?);
                    writeln!(f, "# curvature {problem} taus={taus:?} {limits:?}")?;
                    report.write_csv(f)
                }
                None => {
                    print!("{}", report.summary());
                    Ok(())
                }
            }
        }
        Cmd::Collision { common, pairs, trials } => {
            let pairs = pairs
                .iter()
                .map(|s| {
                    let (a, b) = s.split_once(':').ok_or_else(|| Error::InvalidConfig(format!("bad pair {s:?}")))?;
                    let parse = |v: &str| {
                        v.trim().parse::<usize>().map_err(|_| Error::InvalidConfig(format!("bad pair {s:?}")))
                    };
                    Ok((parse(a)?, parse(b)?))
                })
                .collect::<Result<Vec<_>>>()?;
            common.emit(&cmd_collision(&pairs, trials, common.seed)?)
        }
        Cmd::Solve { common, max_iters, max_epochs, full_gap, full_gap_every, trace_every } => {
            let mut cfg = common.solver()?;
            cfg.stop = StopRule { gap_est: common.threshold, full_gap, max_iters, max_epochs, ..Default::default() };
            if cfg.stop.is_empty() {
                cfg.stop.max_epochs = Some(10.0);
            }
            cfg.full_gap_every = full_gap_every;
            cfg.trace_every = trace_every;
            let outcome = cmd_solve(&common.problem()?, &cfg)?;
            let (trace, failure) = match outcome {
                Ok(r) => {
                    eprintln!(
                        "stopped: {:?} after {} iterations, {} solves, {:.3} ms",
                        r.stop, r.iterations, r.solves, r.wallclock_ms
                    );
                    (r.trace, None)
                }
                Err(f) => (f.trace, Some(f.error)),
            };
            match &common.out {
                Some(p) => trace.write_csv(BufWriter::new(File::create(p)?))?,
                None => trace.write_csv(io::stdout().lock())?,
            }
            failure.map_or(Ok(()), Err)
        }
    }
}

fn main() -> ExitCode {
    let args = match merge_config_args(std::env::args().collect()) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    // later occurrences of a flag replace earlier ones from the config file
    let matches =
        Cli::command().args_override_self(true).mut_subcommands(|c| c.args_override_self(true)).get_matches_from(args);
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
