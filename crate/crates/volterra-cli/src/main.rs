// SPDX-License-Identifier: MIT OR Apache-2.0

//! `volterra`: experiments with branched rough paths for singular
//! Volterra equations.
//!
//! See the library crate for the command implementations; this binary
//! only parses arguments, pins the thread pool, and maps errors to exit
//! codes (`2` for invalid requests, `3` for numerical diagnostics).

use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use volterra_cli::{run, ExperimentConfig};
use volterra_rough::Error;

#[derive(Parser)]
#[command(
    name = "volterra",
    version,
    about = "Tree-indexed rough-path calculus for singular Volterra equations",
    propagate_version = true
)]
struct Cli {
    /// Experiment config file (flat `key = value` text with sections).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory (default: the config's `[output] dir`, else `out`).
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Worker threads for parallel library calls (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Expand the plugging coproduct of a tree, one cut term per line.
    Coproduct {
        /// Tree serialization, e.g. `((0)(1))2(3)` (overrides the config).
        #[arg(long)]
        tree: Option<String>,
    },
    /// List decorated trees with grades and symmetry factors.
    Enumerate,
    /// Build and export the tree-indexed lift of a driver.
    Lift,
    /// Check splitting residuals of iterated integrals across grid levels.
    ChenCheck,
    /// Record the dyadic convergence of a sewing integral.
    Convergence,
    /// Rough Volterra integration of a controlled path.
    Integrate,
    /// Solve a rough Volterra equation by Picard iteration.
    Solve,
    /// Sample kernel bound constants for a declared singularity order.
    VerifyKernel,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Coproduct { .. } => "coproduct",
            Command::Enumerate => "enumerate",
            Command::Lift => "lift",
            Command::ChenCheck => "chen-check",
            Command::Convergence => "convergence",
            Command::Integrate => "integrate",
            Command::Solve => "solve",
            Command::VerifyKernel => "verify-kernel",
        }
    }
}

fn execute(cli: &Cli) -> Result<String, Error> {
    let cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::empty(),
    };
    let out = cfg.output_dir(cli.output.as_deref());
    let tree = match &cli.command {
        Command::Coproduct { tree } => tree.as_deref(),
        _ => None,
    };
    run(cli.command.name(), tree, &cfg, &out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure {threads} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(&cli) {
        Ok(summary) => {
            let mut stdout = std::io::stdout();
            let _ = stdout.write_all(summary.as_bytes());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Diagnostic(_) => ExitCode::from(3),
                Error::Validation(_) | Error::Io(_) => ExitCode::from(2),
            }
        }
    }
}
