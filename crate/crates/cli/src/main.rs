use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use collide_cli::commands::{self, Format};
use collide_cli::output::Sink;
use collide_cli::verify::{self, Which};
use collide_cli::{CliError, RunConfig};

/// Damping Hamiltonian PDMP with non-local collisions: simulation,
/// coupling and contraction checks.
#[derive(Debug, Parser)]
#[command(name = "collide", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value = "csv")]
    format: Format,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Derive the contraction parameters and the rate.
    Params,
    /// Single-chain ensemble.
    Simulate,
    /// Coupled-chain ensemble.
    Couple,
    /// Run one numerical check.
    Verify {
        #[arg(value_enum)]
        which: Which,
    },
    /// Contraction experiment against the exponential envelope.
    Contract,
}

fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let path = cli.config.ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let sink = Sink { dir: cli.out };
    match cli.command {
        Command::Params => commands::cmd_params(&cfg, &sink),
        Command::Simulate => commands::cmd_simulate(&cfg, &sink, cli.format),
        Command::Couple => commands::cmd_couple(&cfg, &sink, cli.format),
        Command::Contract => commands::cmd_contract(&cfg, &sink),
        Command::Verify { which } => {
            let report = verify::run(&cfg, which)?;
            sink.json(&format!("verify_{}.json", serde_json::to_value(which)?.as_str().unwrap_or("check")), &report)?;
            if report.passed {
                Ok(())
            } else {
                Err(CliError::Failed(report.summary))
            }
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        // a closed downstream pipe (e.g. `| head`) is not an error
        Err(CliError::Io(e)) if e.kind() == std::io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("collide: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
