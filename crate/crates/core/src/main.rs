use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use quasiground::cli::{
    parse_config, run_check_potential, run_fiber_dump, run_solve, run_sweep, run_verify, RunConfig,
};
use quasiground::Error;

#[derive(Parser)]
#[command(version, about = "Ground states of a coupled quasilinear Schrödinger system")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Config file (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory; overrides `output_dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Number of solver starts; overrides `seed_count`.
    #[arg(long, global = true)]
    seed_count: Option<usize>,

    /// Suppress progress output on stdout.
    #[arg(long, global = true)]
    quiet: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Compute the ground state; writes profile.csv and summary.txt.
    Solve,
    /// Sample the fibering map of the projected Gaussian seed; writes fiber.csv.
    FiberDump,
    /// Check the bounds, slope and concavity hypotheses on the potential.
    CheckPotential,
    /// Run the identity, inequality, Newton-oracle and comparison checks.
    Verify,
    /// Solve over the product of sweep_alpha and sweep_beta; writes sweep.csv.
    Sweep,
}

fn load(cli: &Cli) -> Result<RunConfig, Error> {
    let path = cli.config.as_ref().ok_or_else(|| Error::ConfigValue("--config <path> is required".into()))?;
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.clone(), source })?;
    let mut config = parse_config(&text)?;
    if let Some(out) = &cli.out {
        config.output_dir = out.clone();
    }
    if let Some(n) = cli.seed_count {
        config.solver.seed_count = n;
    }
    config.validate()?;
    Ok(config)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let run = || -> Result<bool, Error> {
        let config = load(&cli)?;
        let mut stdout = io::stdout();
        let mut sink = io::sink();
        let out: &mut dyn io::Write = if cli.quiet { &mut sink } else { &mut stdout };
        match cli.command {
            Command::Solve => run_solve(&config, out),
            Command::FiberDump => run_fiber_dump(&config, out),
            Command::CheckPotential => run_check_potential(&config, out),
            Command::Verify => run_verify(&config, out),
            Command::Sweep => run_sweep(&config, out),
        }
    };
    match run() {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}
