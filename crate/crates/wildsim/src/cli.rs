//! Command-line interface.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use wildsim_core::branching::{
    closed_law, closed_law_adaptive, p_finite_n, p_kolmogorov, redundant_mean_bound, BranchingLaw, DEFAULT_STEP,
};
use wildsim_core::econo::{self, FixedPointOptions, RateOptions};
use wildsim_core::exec::Executor;
use wildsim_core::kernels::Kernel;
use wildsim_core::particle::{ks_distance, redundant_stats, tagged_law, SimConfig};
use wildsim_core::rng::{substream, Purpose};
use wildsim_core::stats::ks_p_value;
use wildsim_core::trees::{count_trees, enumerate_trees, sample_tree, DEFAULT_ENUMERATION_CAP};
use wildsim_core::wildsum::{cauchy_residual, default_panel, draw_mu_t, Base, SampleEnsemble, TestFunction};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};
use crate::io::{num, Sink, Table, TreeJson};
use crate::par::RayonExecutor;
use crate::selftest;

#[derive(Debug, Parser)]
#[command(name = "wildsim", version, about = "Extended Wild sums, branching laws and mean-field particle simulation")]
pub struct Cli {
    /// Worker threads (default: WILDSIM_THREADS, then all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    /// Omit the timestamp comment line from CSV files.
    #[arg(long, global = true)]
    pub no_header: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Ordered m-ary interaction trees.
    #[command(subcommand)]
    Trees(TreesCmd),
    /// Laws of the number of interactions.
    #[command(subcommand)]
    Branching(BranchingCmd),
    /// Monte Carlo solution of the mean-field equation.
    Solve(SolveCmd),
    /// Particle simulation of the tagged agent.
    Simulate(SimulateCmd),
    /// Wealth exchange: rate, fixed point and convergence.
    #[command(subcommand)]
    Econo(EconoCmd),
    /// KS distance between the particle system and the Wild sum.
    Compare(CompareArgs),
    /// Runs the built-in invariant suites.
    Selftest(SelftestArgs),
}

#[derive(Debug, Subcommand)]
pub enum TreesCmd {
    /// Prints the number of ordered trees with n nodes.
    Count {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
    },
    /// Writes every ordered tree with n nodes as JSON.
    Enumerate {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
        cap: u64,
    },
    /// Draws uniform trees with n nodes.
    Sample {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        draws: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum BranchingCmd {
    /// Emits rows (n, probability).
    Pn(PnArgs),
    /// Upper bound on the mean number of redundant meetings.
    Bound {
        #[arg(long)]
        m: usize,
        #[arg(long)]
        t: f64,
        #[arg(long)]
        pop: u64,
        #[arg(long, default_value_t = 200)]
        n_max: usize,
    },
}

#[derive(Debug, Args)]
#[group(id = "method", multiple = false)]
pub struct PnMethod {
    /// Closed form (default).
    #[arg(long)]
    closed: bool,
    /// Forward equations of the limiting chain.
    #[arg(long)]
    kolmogorov: bool,
    /// Forward equations for a population of N agents.
    #[arg(long, value_name = "N")]
    finite_n: Option<u64>,
}

#[derive(Debug, Args)]
pub struct PnArgs {
    #[arg(long)]
    m: usize,
    #[arg(long)]
    t: f64,
    #[command(flatten)]
    method: PnMethod,
    /// Largest n emitted (default: until the tail is below 1e-10).
    #[arg(long)]
    n_max: Option<usize>,
    #[arg(long, default_value_t = DEFAULT_STEP)]
    step: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
pub struct SolveCmd {
    #[command(subcommand)]
    sub: Option<SolveSub>,
    #[command(flatten)]
    args: SolveArgs,
}

#[derive(Debug, Args)]
pub struct SolveArgs {
    #[arg(long, required = true)]
    config: Option<PathBuf>,
    #[arg(long, required = true)]
    t: Option<f64>,
    #[arg(long, default_value_t = 100_000)]
    samples: usize,
    #[arg(long, required = true)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the raw draws to this CSV file.
    #[arg(long)]
    draws_out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SolveSub {
    /// Residual of the Cauchy problem over the test panel.
    Residual {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 1e-2)]
        dt: f64,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
#[command(args_conflicts_with_subcommands = true, subcommand_negates_reqs = true)]
pub struct SimulateCmd {
    #[command(subcommand)]
    sub: Option<SimulateSub>,
    #[command(flatten)]
    args: SimulateArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, required = true)]
    config: Option<PathBuf>,
    #[arg(long, required = true)]
    t: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    replicas: usize,
    #[arg(long, required = true)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum SimulateSub {
    /// Redundant-meeting statistics across population sizes.
    Redundancy {
        /// Comma-separated population sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        pops: Vec<u64>,
        #[arg(long, default_value_t = 2)]
        m: usize,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 10_000)]
        replicas: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EconoCmd {
    /// Prints η = 1 − E[ΣH²].
    Eta {
        #[arg(long)]
        config: PathBuf,
    },
    /// Iterates the weight map to its fixed point, starting from the initial law.
    FixedPoint {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 50)]
        iterations: usize,
        #[arg(long, default_value_t = 100_000)]
        ensemble: usize,
        /// Run every iteration instead of stopping once successive ensembles agree.
        #[arg(long)]
        no_early_stop: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Gap to the fixed point over a time grid and its exponential fit.
    Rate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,3,4,6")]
        t_grid: Vec<f64>,
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 100_000)]
        ensemble: usize,
        #[arg(long)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Format::Csv)]
        format: Format,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct CompareArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    t: f64,
    #[arg(long, default_value_t = 10_000)]
    replicas: usize,
    #[arg(long, default_value_t = 10_000)]
    samples: usize,
    #[arg(long)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SelftestArgs {
    #[arg(long, default_value_t = 20_240_601)]
    pub seed: u64,
    /// Directory for the result files.
    #[arg(long, default_value = "selftest-results")]
    pub out: PathBuf,
}

/// Parses `argv` and runs it; returns the process exit code.
pub fn main_with<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(cli) {
        Ok(()) => 0,
        // a closed pipe (`| head`) is the reader's choice, not a failure
        Err(CliError::Io { source, .. }) if source.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            match e.remedy() {
                Some(r) => eprintln!("error: {e}; {r}"),
                None => eprintln!("error: {e}"),
            }
            e.exit_code()
        }
    }
}

fn sink(path: Option<PathBuf>, no_header: bool) -> Sink {
    Sink { path, stamp: !no_header }
}

pub fn run(cli: Cli) -> CliResult<()> {
    let no_header = cli.no_header;
    let threads = cli.threads;
    match cli.command {
        Command::Trees(cmd) => trees(cmd, no_header),
        Command::Branching(cmd) => branching(cmd, no_header),
        Command::Solve(cmd) => solve(cmd, &RayonExecutor::new(threads)?, no_header),
        Command::Simulate(cmd) => simulate(cmd, &RayonExecutor::new(threads)?, no_header),
        Command::Econo(cmd) => econo_cmd(cmd, &RayonExecutor::new(threads)?, no_header),
        Command::Compare(args) => compare(args, &RayonExecutor::new(threads)?),
        Command::Selftest(args) => {
            let report = selftest::run(args.seed, &args.out, &RayonExecutor::new(threads)?)?;
            print!("{}", report.table());
            if report.all_passed() {
                Ok(())
            } else {
                Err(CliError::Failed(format!("{} selftest check(s) failed", report.failures())))
            }
        }
    }
}

fn trees(cmd: TreesCmd, no_header: bool) -> CliResult<()> {
    match cmd {
        TreesCmd::Count { m, n } => {
            println!("{}", count_trees(m, n)?);
            Ok(())
        }
        TreesCmd::Enumerate { m, n, out, cap } => {
            let trees: Vec<TreeJson> = enumerate_trees(m, n, cap)?.iter().map(TreeJson::from).collect();
            sink(out, no_header).json(&trees)
        }
        TreesCmd::Sample { m, n, draws, seed, out } => {
            let trees = (0..draws)
                .map(|i| {
                    let mut rng = substream(seed, Purpose::MuSample, i as u64);
                    sample_tree(m, n, &mut rng).map(|t| TreeJson::from(&t))
                })
                .collect::<Result<Vec<_>, _>>()?;
            sink(out, no_header).json(&trees)
        }
    }
}

fn law_table(law: &BranchingLaw) -> Table {
    let mut t = Table::new(&["n", "probability"]);
    for (n, p) in law.probs.iter().enumerate() {
        t.push(vec![n.to_string(), num(*p)]);
    }
    t
}

fn branching(cmd: BranchingCmd, no_header: bool) -> CliResult<()> {
    match cmd {
        BranchingCmd::Pn(a) => {
            let n_max = match a.n_max {
                Some(n) => n,
                None => closed_law_adaptive(a.m, a.t, 1e-10)?.n_max().max(1),
            };
            let law = if a.method.kolmogorov {
                p_kolmogorov(a.m, n_max, a.t, a.step)?
            } else if let Some(pop) = a.method.finite_n {
                p_finite_n(a.m, pop, n_max, a.t, a.step)?
            } else if a.n_max.is_some() {
                closed_law(a.m, a.t, n_max)?
            } else {
                closed_law_adaptive(a.m, a.t, 1e-10)?
            };
            sink(a.out, no_header).table(&law_table(&law))
        }
        BranchingCmd::Bound { m, t, pop, n_max } => {
            println!("{}", num(redundant_mean_bound(m, pop, t, n_max)?));
            Ok(())
        }
    }
}

fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::Usage(format!("missing {flag}; pass it explicitly")))
}

fn solve(cmd: SolveCmd, exec: &RayonExecutor, no_header: bool) -> CliResult<()> {
    match cmd.sub {
        Some(SolveSub::Residual { config, t, dt, samples, seed, out }) => {
            let cfg = RunConfig::load(&config)?.wild_sum()?;
            let res = cauchy_residual(&default_panel(), t, dt, &cfg, samples, seed, exec)?;
            let mut table = Table::new(&["f", "derivative", "generator", "residual", "stderr"]);
            for r in res {
                table.push(vec![r.function.name(), num(r.derivative.mean), num(r.generator.mean), num(r.residual), num(r.se)]);
            }
            sink(out, no_header).table(&table)
        }
        None => {
            let a = cmd.args;
            let cfg = RunConfig::load(&required(a.config, "--config")?)?.wild_sum()?;
            let t = required(a.t, "--t")?;
            let seed = required(a.seed, "--seed")?;
            let mut panel = vec![TestFunction::One];
            panel.extend(default_panel());
            let draws = draw_mu_t(&cfg, t, a.samples, seed, exec)?;
            let mut table = Table::new(&["f", "estimate", "stderr"]);
            for f in &panel {
                let e = draws.expect(|x| f.eval(x));
                table.push(vec![f.name(), num(e.mean), num(e.se)]);
            }
            sink(a.out, no_header).table(&table)?;
            if let Some(path) = a.draws_out {
                sink(Some(path), no_header).table(&values_table("sample", &draws))?;
            }
            Ok(())
        }
    }
}

fn values_table(label: &str, ens: &SampleEnsemble) -> Table {
    let mut t = Table::new(&[label, "value"]);
    for (i, v) in ens.values().iter().enumerate() {
        t.push(vec![i.to_string(), num(*v)]);
    }
    t
}

fn simulate(cmd: SimulateCmd, exec: &RayonExecutor, no_header: bool) -> CliResult<()> {
    match cmd.sub {
        Some(SimulateSub::Redundancy { pops, m, t, replicas, seed, out }) => {
            let mut table = Table::new(&["population", "mean", "stderr", "tree_fraction", "bound"]);
            for &pop in &pops {
                let pop_usize = usize::try_from(pop).map_err(|_| CliError::Usage(format!("population {pop} is too large")))?;
                let cfg = SimConfig::new(pop_usize, Kernel::Identity { m }, Base::PointMass(0.0), t, seed)?;
                let s = redundant_stats(&cfg, t, replicas, exec)?;
                let bound = redundant_mean_bound(m, pop, t, 200)?;
                table.push(vec![pop.to_string(), num(s.mean), num(s.se), num(s.tree_fraction), num(bound)]);
            }
            sink(out, no_header).table(&table)
        }
        None => {
            let a = cmd.args;
            let t = required(a.t, "--t")?;
            let seed = required(a.seed, "--seed")?;
            let cfg = RunConfig::load(&required(a.config, "--config")?)?.sim_config(t, seed)?;
            let ens = tagged_law(&cfg, t, a.replicas, exec)?;
            sink(a.out, no_header).table(&values_table("replica", &ens))
        }
    }
}

#[derive(Debug, Serialize)]
struct RateJson {
    eta: f64,
    a: f64,
    fitted_rate: Option<f64>,
    fitted_constant: Option<f64>,
    insufficient_signal: bool,
    gamma_iterations: usize,
    gap_curve: Vec<GapJson>,
    e_sequence: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct GapJson {
    t: f64,
    gap: f64,
    stderr: f64,
    function: String,
    in_fit: bool,
}

fn econo_cmd(cmd: EconoCmd, exec: &RayonExecutor, no_header: bool) -> CliResult<()> {
    match cmd {
        EconoCmd::Eta { config } => {
            let spec = RunConfig::load(&config)?.weights()?;
            println!("{}", num(econo::eta(&spec)?));
            Ok(())
        }
        EconoCmd::FixedPoint { config, seed, iterations, ensemble, no_early_stop, out } => {
            let cfg = RunConfig::load(&config)?;
            let spec = cfg.weights()?;
            let base = cfg.initial.build()?;
            let init: Vec<f64> =
                exec.map_indexed(ensemble, |j| base.sample(&mut substream(seed, Purpose::Validation, j as u64)));
            let opts = FixedPointOptions {
                max_iterations: iterations,
                ensemble_size: ensemble,
                early_stop: !no_early_stop,
                pin_mean: econo::MeanPin::Value(base.moments().0),
                ..Default::default()
            };
            let fp = econo::fixed_point(&spec, &SampleEnsemble::new(init)?, &opts, seed, exec)?;
            eprintln!(
                "{} iterations, {}",
                fp.iterations,
                if fp.converged { "converged" } else { "not converged" }
            );
            sink(out, no_header).table(&values_table("sample", &fp.ensemble))
        }
        EconoCmd::Rate { config, t_grid, samples, ensemble, seed, format, out } => {
            let cfg = RunConfig::load(&config)?;
            let spec = cfg.weights()?;
            let base = cfg.initial.build()?;
            let mut opts = RateOptions { samples_per_t: samples, ..Default::default() };
            opts.fixed_point.ensemble_size = ensemble;
            let rep = econo::rate_fit(&spec, &base, &t_grid, &opts, seed, exec)?;
            let curve: Vec<GapJson> = rep
                .gap_curve
                .iter()
                .enumerate()
                .map(|(i, g)| GapJson { t: g.t, gap: g.gap, stderr: g.se, function: g.function.name(), in_fit: rep.window.contains(&i) })
                .collect();
            match format {
                Format::Json => sink(out, no_header).json(&RateJson {
                    eta: rep.eta,
                    a: rep.a,
                    fitted_rate: rep.fitted_rate,
                    fitted_constant: rep.fitted_constant,
                    insufficient_signal: rep.insufficient_signal,
                    gamma_iterations: rep.gamma_iterations,
                    gap_curve: curve,
                    e_sequence: rep.e_sequence,
                }),
                Format::Csv => {
                    let mut table = Table::new(&["t", "gap", "stderr", "f", "in_fit"]);
                    for g in curve {
                        table.push(vec![num(g.t), num(g.gap), num(g.stderr), g.function, g.in_fit.to_string()]);
                    }
                    sink(out, no_header).table(&table)?;
                    match rep.fitted_rate {
                        Some(r) => eprintln!("eta {} fitted rate {}", num(rep.eta), num(r)),
                        None => eprintln!("eta {}: insufficient signal for a fit", num(rep.eta)),
                    }
                    Ok(())
                }
            }
        }
    }
}

#[derive(Debug, Serialize)]
struct CompareJson {
    t: f64,
    population: usize,
    replicas: usize,
    samples: usize,
    ks_distance: f64,
    p_value: f64,
}

fn compare(a: CompareArgs, exec: &RayonExecutor) -> CliResult<()> {
    let run_cfg = RunConfig::load(&a.config)?;
    let sim = run_cfg.sim_config(a.t, a.seed)?;
    let micro = tagged_law(&sim, a.t, a.replicas, exec)?;
    let macro_ = draw_mu_t(&run_cfg.wild_sum()?, a.t, a.samples, a.seed, exec)?;
    let d = ks_distance(&micro, &macro_)?;
    let report = CompareJson {
        t: a.t,
        population: sim.population,
        replicas: a.replicas,
        samples: a.samples,
        ks_distance: d,
        p_value: ks_p_value(d, micro.len(), macro_.len()),
    };
    Sink { path: a.out, stamp: false }.json(&report)
}
