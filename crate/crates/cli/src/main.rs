use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod error;
mod run;

use error::CliError;

#[derive(Parser, Debug)]
#[command(name = "polfront", version, about = "Learn and evaluate benefit/cost treatment policy frontiers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    pub config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Base directory for run directories; overrides the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a synthetic cohort.
    SynthGen(Common),
    /// Fit the single policy described by `train_target`.
    Train(Common),
    /// Evaluate a saved policy on the test cohort.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Saved policy; overrides the config's `policy`.
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// Train all selected methods and write the frontier report.
    Frontier(Common),
    /// Sweep the deferral bonus and compare with the clinician on each decision cohort.
    DeferSweep(Common),
    /// Fit and evaluate the unconstrained and constrained baselines.
    Baseline(Common),
}

fn dispatch(cli: Cli) -> Result<PathBuf, CliError> {
    match cli.command {
        Command::SynthGen(c) => commands::synth_gen(&c),
        Command::Train(c) => commands::train(&c),
        Command::Eval { common, policy } => commands::eval(&common, policy),
        Command::Frontier(c) => commands::frontier(&c),
        Command::DeferSweep(c) => commands::defer_sweep(&c),
        Command::Baseline(c) => commands::baseline(&c),
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
    match dispatch(cli) {
        Ok(dir) => {
            println!("{}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
