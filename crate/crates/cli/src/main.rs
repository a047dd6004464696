use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use kronsolve_core::bench::{
    oracle_checks, run_regression_experiment, run_tucker_experiment, write_als_csv, write_results_csv, write_tensor,
    RegressionSpec, SolverKind, TuckerInput, TuckerSpec,
};
use kronsolve_core::tucker::{synthetic_low_rank, SolverMode, TuckerConfig};

#[derive(Parser)]
#[command(
    name = "kronsolve",
    version,
    about = "Kronecker ridge regression and Tucker ALS experiments"
)]
struct Cli {
    /// Worker threads for internal parallelism.
    #[arg(long, env = "KRONSOLVE_THREADS", global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare regression solvers on synthetic Kronecker instances.
    SynthRegression(RegressionArgs),
    /// Run regularized Tucker ALS on a tensor file or a synthetic tensor.
    Tucker(TuckerArgs),
    /// Write a synthetic low-rank tensor file.
    SynthTensor(SynthTensorArgs),
    /// Check the structured kernels against dense oracles.
    Check,
}

fn parse_list<T: std::str::FromStr>(s: &str) -> Result<Vec<T>>
where
    T::Err: std::fmt::Display,
{
    s.split(',')
        .map(|t| t.trim().parse::<T>().map_err(|e| anyhow::anyhow!("{t:?}: {e}")))
        .collect()
}

#[derive(Args)]
struct RegressionArgs {
    #[arg(long, default_value_t = 128)]
    n: usize,
    #[arg(long, default_value_t = 8)]
    d: usize,
    /// Number of Kronecker factors.
    #[arg(long, default_value_t = 2)]
    order: usize,
    #[arg(long, default_value_t = 0.1)]
    eps: f64,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    /// Multiplier on the theoretical sample counts.
    #[arg(long, default_value_t = 1e-5)]
    alpha: f64,
    /// Comma-separated seeds, one instance each.
    #[arg(long, default_value = "0")]
    seeds: String,
    /// Comma-separated subset of naive,kronmatmul,sketch-solve,fast.
    #[arg(long, default_value = "naive,kronmatmul,sketch-solve,fast")]
    solvers: String,
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    /// Run exact solvers past their size guards.
    #[arg(long)]
    force: bool,
    /// Run independent (seed, solver) cells concurrently.
    #[arg(long)]
    parallel: bool,
    #[arg(long, default_value = "results.csv")]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Fast,
}

#[derive(Args)]
struct TuckerArgs {
    /// Tensor file in KTN1 format.
    #[arg(long, conflicts_with = "synthetic")]
    input: Option<PathBuf>,
    /// Generate a synthetic tensor with this shape instead, e.g. 20,20,20.
    #[arg(long)]
    synthetic: Option<String>,
    /// Multilinear rank of the synthetic tensor; defaults to the core shape.
    #[arg(long)]
    synthetic_rank: Option<String>,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    data_seed: u64,
    /// Core shape, e.g. 4,4,4.
    #[arg(long)]
    core: String,
    #[arg(long, default_value_t = 1e-3)]
    lambda: f64,
    #[arg(long, default_value_t = 0.25)]
    eps: f64,
    #[arg(long, default_value_t = 0.01)]
    delta: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, value_enum, default_value = "exact")]
    mode: ModeArg,
    #[arg(long, default_value_t = 5)]
    sweeps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    force: bool,
    #[arg(long, default_value = "report.csv")]
    out: PathBuf,
}

#[derive(Args)]
struct SynthTensorArgs {
    #[arg(long)]
    shape: String,
    #[arg(long)]
    rank: String,
    #[arg(long, default_value_t = 0.01)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn synth_regression(args: RegressionArgs) -> Result<()> {
    let spec = RegressionSpec {
        n: args.n,
        d: args.d,
        order: args.order,
        lambda: args.lambda,
        eps: args.eps,
        delta: args.delta,
        alpha: args.alpha,
        seeds: parse_list(&args.seeds).context("--seeds")?,
        solvers: parse_list::<SolverKind>(&args.solvers).context("--solvers")?,
        repetitions: args.repetitions,
        force: args.force,
        parallel: args.parallel,
    };
    let rows = run_regression_experiment(&spec)?;
    write_results_csv(&args.out, &rows)?;
    for row in &rows {
        match (&row.error, row.loss) {
            (Some(e), _) => println!("{:<12} seed {:<4} error: {e}", row.solver, row.seed),
            (None, Some(loss)) => println!(
                "{:<12} seed {:<4} loss {:.6e}  ratio {}  rows {}  time {:.3?}",
                row.solver,
                row.seed,
                loss,
                row.ratio.map_or("-".into(), |r| format!("{r:.4}")),
                row.rows_sampled.unwrap_or(0),
                row.wall_time.unwrap_or_default()
            ),
            (None, None) => {}
        }
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn tucker(args: TuckerArgs) -> Result<()> {
    let core: Vec<usize> = parse_list(&args.core).context("--core")?;
    let input = match (args.input, args.synthetic) {
        (Some(path), None) => TuckerInput::File(path),
        (None, Some(shape)) => TuckerInput::Synthetic {
            shape: parse_list(&shape).context("--synthetic")?,
            rank: match &args.synthetic_rank {
                Some(r) => parse_list(r).context("--synthetic-rank")?,
                None => core.clone(),
            },
            noise: args.noise,
            seed: args.data_seed,
        },
        _ => bail!("give exactly one of --input or --synthetic"),
    };
    let spec = TuckerSpec {
        input,
        core,
        config: TuckerConfig {
            lambda: args.lambda,
            eps: args.eps,
            delta: args.delta,
            alpha: args.alpha,
            sweeps: args.sweeps,
            mode: match args.mode {
                ModeArg::Exact => SolverMode::Exact,
                ModeArg::Fast => SolverMode::Fast,
            },
            seed: args.seed,
            ..TuckerConfig::default()
        },
        force: args.force,
    };
    let (_, report) = run_tucker_experiment(&spec)?;
    write_als_csv(&args.out, &report)?;
    for (k, (loss, rre)) in report.sweep_losses.iter().zip(&report.sweep_rre).enumerate().skip(1) {
        println!(
            "sweep {k}: loss {loss:.6e}  rre {rre:.6e}  time {:.3?}",
            report.sweep_times[k - 1]
        );
    }
    println!(
        "final rre {:.6e}, mean sweep time {:.3?}",
        report.rre,
        report.mean_sweep_time()
    );
    println!("wrote {}", args.out.display());
    Ok(())
}

fn synth_tensor(args: SynthTensorArgs) -> Result<()> {
    let shape: Vec<usize> = parse_list(&args.shape).context("--shape")?;
    let rank: Vec<usize> = parse_list(&args.rank).context("--rank")?;
    let x = synthetic_low_rank(&shape, &rank, args.noise, args.seed)?;
    write_tensor(&args.out, &x)?;
    println!("wrote {}", args.out.display());
    Ok(())
}

fn check() -> bool {
    let outcomes = oracle_checks();
    for c in &outcomes {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    outcomes.iter().all(|c| c.passed)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("warning: could not size thread pool: {e}");
        }
    }
    let result = match cli.command {
        Command::SynthRegression(a) => synth_regression(a),
        Command::Tucker(a) => tucker(a),
        Command::SynthTensor(a) => synth_tensor(a),
        Command::Check => {
            return if check() { ExitCode::SUCCESS } else { ExitCode::FAILURE };
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
