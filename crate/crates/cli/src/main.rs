mod commands;
mod run;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use run::{CommonArgs, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "thbsgs", version, about = "Hoisted BSGS linear transforms over RNS-CKKS: demos, cost sweeps and datapath simulation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: CommonArgs,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encrypts a random vector, applies a random matrix with each method and
    /// reports errors and operation traces.
    Demo {
        /// Report pairwise slot differences between methods.
        #[arg(long)]
        compare: bool,
        /// Use the identity matrix instead of a random one.
        #[arg(long)]
        identity: bool,
        /// Largest accepted pairwise difference.
        #[arg(long)]
        pairwise_tolerance: Option<f64>,
    },
    /// Key size against modular multiplications over factorizations.
    Analyze,
    /// Meters the six-phase datapath; `--compute` also runs the arithmetic.
    Simulate {
        #[arg(long)]
        compute: bool,
        /// Write the compute-mode output ciphertext as an HLT1 container.
        #[arg(long)]
        emit_ciphertext: Option<std::path::PathBuf>,
    },
    /// Per-cell differences between the simulator and the closed-form
    /// traffic model.
    Validate {
        /// Evaluate the closed form under a different parallelism.
        #[arg(long)]
        model_parallelism: Option<String>,
        /// Accept only open-question deltas.
        #[arg(long)]
        strict: bool,
    },
    /// Describes an HLT1 container, or the named parameter sets.
    Inspect { file: Option<std::path::PathBuf> },
}

/// Exit status of a command that ran to completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Demo {
            compare,
            identity,
            pairwise_tolerance,
        } => {
            let rc = RunConfig::resolve(&cli.common, "demo")?;
            commands::demo(&rc, compare, identity, pairwise_tolerance)
        }
        Command::Analyze => commands::analyze(&RunConfig::resolve(&cli.common, "analyze")?),
        Command::Simulate {
            compute,
            emit_ciphertext,
        } => {
            let rc = RunConfig::resolve(&cli.common, "simulate")?;
            commands::simulate(&rc, compute, emit_ciphertext.as_deref())
        }
        Command::Validate {
            model_parallelism,
            strict,
        } => {
            let rc = RunConfig::resolve(&cli.common, "validate")?;
            commands::validate(&rc, model_parallelism.as_deref(), strict)
        }
        Command::Inspect { file } => {
            let rc = RunConfig::resolve(&cli.common, "inspect")?;
            commands::inspect(&rc, file.as_deref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => {
                    ExitCode::SUCCESS
                }
                _ => ExitCode::from(1),
            };
        }
    };
    match run(cli) {
        Ok(Outcome::Pass) => ExitCode::SUCCESS,
        Ok(Outcome::Fail) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
