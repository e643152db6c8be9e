use std::env;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};
use optoferm_cli::{exit, run};

#[derive(Parser)]
#[command(
    name = "optoferm",
    version,
    about = "Kinetic modeling, Gaussian-process residual learning, parameter estimation, and \
             open-loop light-schedule optimization for optogenetic lactate fermentations"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON configuration file
    #[arg(long)]
    config: PathBuf,
    /// Seed for randomized stages; identical seeds reproduce results bit
    /// for bit
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory (created if absent)
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a batch under a light schedule and report its metrics
    Simulate(CommonArgs),
    /// Fit kinetic parameters to one or more batches with a particle swarm
    Fit(CommonArgs),
    /// Extract finite-difference model residuals from batch data
    Residuals(CommonArgs),
    /// Train the three residual Gaussian-process regressors
    TrainGp(CommonArgs),
    /// Solve the open-loop light-schedule optimization
    Optimize(CommonArgs),
    /// Whole-batch metrics of a trajectory or dataset CSV
    Metrics(CommonArgs),
}

fn main() -> ExitCode {
    if let Ok(threads) = env::var("OPTOFERM_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
            }
            _ => {
                eprintln!("error: OPTOFERM_THREADS must be a positive integer, got `{threads}`");
                return ExitCode::from(exit::CONFIG);
            }
        }
    }

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => exit::OK,
                _ => exit::CONFIG,
            };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };

    let (args, command): (&CommonArgs, fn(&std::path::Path, u64, &std::path::Path) -> _) =
        match &cli.command {
            Cmd::Simulate(a) => (a, run::simulate),
            Cmd::Fit(a) => (a, run::fit),
            Cmd::Residuals(a) => (a, run::residuals),
            Cmd::TrainGp(a) => (a, run::train_gp),
            Cmd::Optimize(a) => (a, run::optimize),
            Cmd::Metrics(a) => (a, run::metrics),
        };

    match command(&args.config, args.seed, &args.out) {
        Ok(()) => ExitCode::from(exit::OK),
        Err(err) => {
            eprintln!("error: {err}");
            let mut source = std::error::Error::source(&err);
            while let Some(cause) = source {
                eprintln!("  caused by: {cause}");
                source = cause.source();
            }
            ExitCode::from(err.exit_code())
        }
    }
}
