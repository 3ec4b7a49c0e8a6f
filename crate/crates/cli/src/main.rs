//! `swarmgame`: train value networks, solve open-loop games, simulate,
//! compare and plot.

mod commands;
mod config;
mod manifest;
mod plot;
mod starts;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use swarmgame_learn::presets::Scale;
use swarmgame_learn::LearnError;
use swarmgame_neural::NeuralError;

#[derive(Parser)]
#[command(name = "swarmgame", version, about = "Two-swarm density games on region graphs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Common {
    /// TOML file overriding preset fields; may name its base with `preset = "..."`.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// two-regions, four-regions or ten-regions, optionally with a -desk or -paper suffix.
    #[arg(long)]
    pub preset: Option<String>,
    #[arg(long, default_value = "desk")]
    pub scale: Scale,
    /// Overrides every seed in the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Args, Clone)]
pub struct StartArgs {
    /// CSV of starts, one `x1_1..x1_M,x2_1..x2_M` row each.
    #[arg(long)]
    pub starts: Option<PathBuf>,
    /// Number of uniform random starts when no file is given.
    #[arg(long)]
    pub count: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum PlotKind {
    /// Density of each region over time from a trajectory CSV.
    Density,
    /// Final distributions from a comparison or rollout CSV.
    Final,
    /// Absolute payoff errors from an errors CSV.
    Histogram,
}

#[derive(Subcommand)]
enum Command {
    /// Train a value network by curriculum on the HJI residual.
    TrainPinn {
        #[command(flatten)]
        common: Common,
    },
    /// Solve the open-loop boundary value problem for a batch of starts.
    SolveBvp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        starts: PathBuf,
    },
    /// Closed-loop rollouts with a trained value network.
    Rollout {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        starts: StartArgs,
    },
    /// Closed-loop payoffs against BVP solutions warm-started from them.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        starts: StartArgs,
    },
    /// Train and evaluate the Nash DQN baseline (2-region game only).
    TrainDqn {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        starts: StartArgs,
    },
    /// Render an SVG figure from a CSV output.
    Plot {
        #[arg(long, value_enum)]
        kind: PlotKind,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Which finals to draw from a comparison file: net or bvp.
        #[arg(long, default_value = "net")]
        source: String,
        #[arg(long, default_value_t = 20)]
        bins: usize,
    },
}

/// Exit code 2 for numerical failures, 1 for everything else.
fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(le) = cause.downcast_ref::<LearnError>() {
            if matches!(le, LearnError::Diverged { .. } | LearnError::NonFinite(_)) {
                return 2;
            }
        }
        if let Some(NeuralError::NonFinite(_)) = cause.downcast_ref::<NeuralError>() {
            return 2;
        }
        if let Some(swarmgame_core::Error::Singular(_)) = cause.downcast_ref::<swarmgame_core::Error>() {
            return 2;
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::TrainPinn { common } => commands::train_pinn(&common),
        Command::SolveBvp { common, starts } => commands::solve_bvp(&common, &starts),
        Command::Rollout {
            common,
            checkpoint,
            starts,
        } => commands::rollout(&common, &checkpoint, &starts),
        Command::Compare {
            common,
            checkpoint,
            starts,
        } => commands::compare(&common, &checkpoint, &starts),
        Command::TrainDqn { common, starts } => commands::train_dqn(&common, &starts),
        Command::Plot {
            kind,
            input,
            out,
            source,
            bins,
        } => commands::plot(kind, &input, &out, &source, bins),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
