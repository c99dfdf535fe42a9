//! `spc`: evaluate, sweep, verify and simulate squared posterior contraction
//! for diagonal linear inverse problems.

mod commands;
mod config;
mod error;
mod output;
mod theory;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{ExperimentConfig, Prepared, CONFIG_HELP};
use error::CliError;

#[derive(Debug, Parser)]
#[command(name = "spc", version, about = "Squared posterior contraction for linear inverse problems", after_help = CONFIG_HELP)]
struct Cli {
    /// JSON experiment configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path (stdout when absent).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel backend.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, hide = true)]
    debug_gamma_star: Option<f64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Bias, variance, spread and spc for each noise level.
    Eval,
    /// Sweep the noise grid and fit the contraction exponent.
    Rate,
    /// Run the structural self-checks.
    Verify,
    /// Monte Carlo estimate of spc against the closed form.
    Mc,
    /// Solve the balancing equation for each noise level.
    Balance,
}

fn init_threads(threads: Option<usize>) -> Result<(), CliError> {
    let Some(n) = threads else { return Ok(()) };
    if n == 0 {
        return Err(CliError::Config("invalid `--threads`: must be at least 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Config(format!("invalid `--threads`: {e}")))?;
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    init_threads(cli.threads)?;
    let mut config = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    let out = cli.out.clone().or_else(|| config.output.as_ref().map(PathBuf::from));
    let prepared = Prepared::new(config)?;
    let out = out.as_deref();
    match cli.command {
        Command::Eval => commands::eval(&prepared, out),
        Command::Rate => commands::rate(&prepared, out),
        Command::Verify => commands::verify_cmd(&prepared, prepared.config.seed, cli.debug_gamma_star, out),
        Command::Mc => commands::mc(&prepared, out),
        Command::Balance => commands::balance(&prepared, out),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("spc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
