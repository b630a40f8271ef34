//! spir — run, analyze, and plan two-database SPIR over imperfect key channels.
//!
//! Exit codes are a stable contract: 0 success, 1 usage error, 2 data error
//! (malformed transcript or config contents).

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};

mod commands;
mod config;

use commands::{AnalyzeArgs, PlanArgs, RunArgs};

#[derive(Debug)]
pub(crate) enum CliError {
    /// The invocation is wrong: bad flags, missing files, nonsense requests.
    Usage(String),
    /// The invocation is fine but an input file's contents are not.
    Data(String),
}

#[derive(Parser, Debug)]
#[command(name = "spir", version, about = "Two-database SPIR simulator and planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate a batch of protocol runs and write a transcript
    Run(RunArgs),
    /// Check a transcript against a security definition
    Analyze(AnalyzeArgs),
    /// Evaluate key-cost models and feasibility limits
    Plan(PlanArgs),
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    let result = match &cli.command {
        Command::Run(args) => commands::cmd_run(args),
        Command::Analyze(args) => commands::cmd_analyze(args),
        Command::Plan(args) => commands::cmd_plan(args),
    };
    match result {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
        Err(CliError::Data(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
    }
}
