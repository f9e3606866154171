//! `stackroute` — solvers and experiments for Stackelberg congestion games
//! on road networks: equilibrium routing under imitative logit dynamics,
//! reverse-mode gradients through the unrolled dynamics, and leader-side
//! mirror descent, with CSV/JSON results for downstream analysis.

mod commands;
mod config;
mod experiments;
mod output;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Parser, Subcommand};

use config::{load_config_file, Overrides};

#[derive(Parser)]
#[command(name = "stackroute", version, about, long_about = None)]
struct Cli {
    /// JSON config file supplying defaults for any flag
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the routing equilibrium (or cooperative assignment) at the
    /// problem's default decision and trace the convergence
    SolveWe(Overrides),
    /// Differentiate the unrolled dynamics and compare against central
    /// finite differences
    GradientCheck(Overrides),
    /// Run a leader solver (dol | sil | ioa | so), optionally from many
    /// seeded starts
    SolveScg(Overrides),
    /// Run a named experiment preset and write its report directory
    Experiment {
        /// One of: convergence, multi-equilibria, gradient-depth, opcount,
        /// scaling, design-bench, tollable, od-ranking
        preset: String,
        #[command(flatten)]
        flags: Overrides,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let file = load_config_file(cli.config.as_ref())?;
    match cli.command {
        Command::SolveWe(flags) => commands::cmd_solve_we(&flags.merge_under(file)),
        Command::GradientCheck(flags) => commands::cmd_gradient_check(&flags.merge_under(file)),
        Command::SolveScg(flags) => commands::cmd_solve_scg(&flags.merge_under(file)),
        Command::Experiment { preset, flags } => {
            experiments::run_preset(&preset, &flags.merge_under(file))
        }
    }
}
