use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use l0_control::cli::{self, parse_list, Exit, RunConfig, SolverKind};
use l0_control::problem::ProblemConfig;

#[derive(Parser)]
#[command(name = "l0-control", version, about = "Sparse optimal control with an L0 cost: solve, verify, sweep")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the problem and write solution, trace and report.
    Solve(Common),
    /// Run first- and second-order checks at a solution.
    Verify(Common),
    /// Solve along a grid of beta values.
    Sweep(Common),
    /// Compare the implementation against brute-force oracles.
    Oracle(Common),
}

#[derive(Args)]
struct Common {
    /// Problem and run configuration (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated tau values for the sufficient condition.
    #[arg(long)]
    tau: Option<String>,
    /// Comma-separated, increasing beta grid for `sweep`.
    #[arg(long)]
    beta: Option<String>,
    /// `l0` or `pc`.
    #[arg(long)]
    solver: Option<String>,
    /// Solution field CSV for `verify`.
    #[arg(long)]
    solution: Option<PathBuf>,
}

fn run_config(c: &Common, needs_problem: bool) -> l0_control::Result<RunConfig> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::from_file(p)?,
        None if needs_problem => {
            return Err(l0_control::Error::Config("--config is required".into()))
        }
        None => RunConfig::new(ProblemConfig::default()),
    };
    cfg.out = c.out.clone();
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = &c.tau {
        cfg.taus = Some(parse_list(t, "--tau")?);
    }
    if let Some(b) = &c.beta {
        cfg.betas = parse_list(b, "--beta")?;
    }
    if let Some(s) = &c.solver {
        cfg.solver = SolverKind::parse(s)?;
    }
    if let Some(p) = &c.solution {
        cfg.solution = Some(p.clone());
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let (common, needs_problem, cmd): (&Common, bool, fn(&RunConfig) -> Exit) = match &args.command {
        Command::Solve(c) => (c, true, cli::cmd_solve),
        Command::Verify(c) => (c, true, cli::cmd_verify),
        Command::Sweep(c) => (c, true, cli::cmd_sweep),
        Command::Oracle(c) => (c, false, cli::cmd_oracle),
    };
    let exit = match run_config(common, needs_problem) {
        Ok(cfg) => cmd(&cfg),
        Err(e) => {
            eprintln!("error: {e}");
            Exit::ConfigError
        }
    };
    ExitCode::from(exit.code() as u8)
}
