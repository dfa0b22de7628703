use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sledge_opt::{execute, load, output_dir, seed_offset_from_env, CliError, CliResult, Command};

#[derive(Parser)]
#[command(name = "sledge-opt", version, about = "Run variance-reduced optimization experiments from JSON configs")]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run every (algorithm, grid point, seed) and write traces plus summary.json.
    Run(Common),
    /// Like run, and mark the best grid point per algorithm.
    Sweep(Common),
    /// Compare per-step estimator discrepancy of SLEDGE, SAGA and SARAH.
    Discrepancy(Common),
    /// Check the config and exit without running anything.
    Validate(Common),
}

#[derive(Args)]
struct Common {
    config: PathBuf,
    /// Runs executed in parallel.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Output directory, overriding the config's output_dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn dispatch(cmd: Cmd) -> CliResult<()> {
    let (args, command) = match cmd {
        Cmd::Run(a) => (a, Some(Command::Run)),
        Cmd::Sweep(a) => (a, Some(Command::Sweep)),
        Cmd::Discrepancy(a) => (a, Some(Command::Discrepancy)),
        Cmd::Validate(a) => (a, None),
    };
    if args.jobs == 0 {
        return Err(CliError::schema("--jobs", "must be at least 1"));
    }
    let exp = load(&args.config, seed_offset_from_env()?)?;
    let Some(command) = command else {
        if exp.config.algorithms.is_empty() && exp.config.discrepancy.is_none() {
            println!("ok (no algorithms or discrepancy section)");
        } else {
            println!("ok: {} runs", exp.runs.len());
        }
        return Ok(());
    };
    let out = output_dir(&exp, args.out.as_deref());
    let summary = execute(&exp, command, &out, args.jobs)?;
    let failed = summary.runs.iter().filter(|r| r.status == sledge_opt::summary::RunStatus::Failed).count();
    println!("wrote {} runs to {}", summary.runs.len(), out.display());
    if failed > 0 {
        return Err(CliError::RunsFailed(failed));
    }
    Ok(())
}
