use std::path::PathBuf;
use std::process::ExitCode;

use atfbm_cli::commands::output_help;
use atfbm_cli::config::{parse_config, CommandId, Flags};
use atfbm_cli::{dispatch, EXIT_ERROR};
use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

/// Simulation and numerical checks for time-changed fractional Brownian motion.
#[derive(Parser)]
#[command(name = "atfbm", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// Config file of `key = value` lines (`#` starts a comment).
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Master seed; overrides `seed` from the file and arguments.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides `out`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Worker threads (0 = all cores); results do not depend on it.
    #[arg(long)]
    workers: Option<usize>,
    /// `key=value` overrides applied after the config file.
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Sample paths of the time-changed process.
    Simulate(Shared),
    /// Tabulate the one-dimensional marginal density and check its mass.
    Density(Shared),
    /// Residual checks of the governing equations.
    PdeCheck(Shared),
    /// Local-time existence, Fourier identity and scaling checks.
    Localtime(Shared),
    /// Discrete linear-process limit, variance growth and composed limit.
    ScalingLimit(Shared),
    /// Increment tail constant and running-maximum tail slope.
    Tails(Shared),
    /// Closed-form and quadrature oracles for auxiliary integrals.
    Oracle(Shared),
    /// Re-verify manifests found under a directory and summarise their checks.
    Report(Shared),
}

impl Command {
    fn split(self) -> (CommandId, Shared) {
        match self {
            Command::Simulate(s) => (CommandId::Simulate, s),
            Command::Density(s) => (CommandId::Density, s),
            Command::PdeCheck(s) => (CommandId::PdeCheck, s),
            Command::Localtime(s) => (CommandId::Localtime, s),
            Command::ScalingLimit(s) => (CommandId::ScalingLimit, s),
            Command::Tails(s) => (CommandId::Tails, s),
            Command::Oracle(s) => (CommandId::Oracle, s),
            Command::Report(s) => (CommandId::Report, s),
        }
    }
}

fn run(id: CommandId, shared: Shared) -> Result<i32, String> {
    let file = match &shared.config {
        Some(path) => std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?,
        None => String::new(),
    };
    let flags = Flags { seed: shared.seed, out: shared.out, workers: shared.workers };
    let cfg = parse_config(id, &file, &shared.overrides, &flags).map_err(|e| e.to_string())?;
    let result = dispatch(&cfg).map_err(|e| format!("{}: {e}", cfg.out.display()))?;
    for c in result.checks() {
        println!("{} {}: {}", if c.passed() { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(e) = &result.manifest.error {
        eprintln!("error: {e}");
    }
    Ok(result.exit_code())
}

fn main() -> ExitCode {
    let mut command = Cli::command();
    for id in CommandId::ALL {
        command = command.mut_subcommand(id.name(), |sub| {
            sub.after_long_help(format!(
                "{}\nOutputs (with results.json and manifest.json in the output directory):\n{}\n",
                id.help_text(),
                output_help(id).lines().map(|l| format!("  {}", l.trim())).collect::<Vec<_>>().join("\n")
            ))
        });
    }
    let cli = match Cli::from_arg_matches(&command.get_matches()) {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    let (id, shared) = cli.command.split();
    let code = run(id, shared).unwrap_or_else(|e| {
        eprintln!("error: {e}");
        EXIT_ERROR
    });
    ExitCode::from(code as u8)
}
