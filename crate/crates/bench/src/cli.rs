use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::config::ModeName;

#[derive(Debug, Parser)]
#[command(
    name = "pfsgd-bench",
    version,
    about = "Run parameter-free SGD tuning experiments"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CommandArgs,
}

#[derive(Debug, Subcommand)]
pub enum CommandArgs {
    /// Tune the SGD step size within a query budget B, once per repetition.
    Tune(Overrides),
    /// Chain tuner rounds with doubling budgets 2, 4, ..., 2^M (strongly convex use).
    Restart(Overrides),
    /// Monte Carlo frequency of the noise good event over one round's step-size grid.
    ValidateGoodEvent(Overrides),
    /// Monte Carlo crossing frequency of the stitched martingale boundary.
    BoundaryTest(Overrides),
    /// Tune over a list of budgets and fit the log-log rate of the median gap.
    Sweep(Overrides),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Tune,
    Restart,
    ValidateGoodEvent,
    BoundaryTest,
    Sweep,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Tune => "tune",
            Command::Restart => "restart",
            Command::ValidateGoodEvent => "validate-good-event",
            Command::BoundaryTest => "boundary-test",
            Command::Sweep => "sweep",
        }
    }
}

impl CommandArgs {
    pub fn split(self) -> (Command, Overrides) {
        match self {
            CommandArgs::Tune(o) => (Command::Tune, o),
            CommandArgs::Restart(o) => (Command::Restart, o),
            CommandArgs::ValidateGoodEvent(o) => (Command::ValidateGoodEvent, o),
            CommandArgs::BoundaryTest(o) => (Command::BoundaryTest, o),
            CommandArgs::Sweep(o) => (Command::Sweep, o),
        }
    }
}

/// Flags mirror the config fields and take precedence over the file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// TOML config file.
    #[arg(short, long)]
    pub config: Option<PathBuf>,
    /// Total subgradient-query budget B per tuner run.
    #[arg(long)]
    pub budget: Option<u64>,
    /// Budgets for a sweep, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub budgets: Option<Vec<u64>>,
    /// Number of restart rounds M; round m gets budget 2^m.
    #[arg(long)]
    pub rounds: Option<u32>,
    /// Target accuracy for restarts; round m uses η_ε = ε / (L² 2^m).
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Smallest step size η_ε; the search never returns anything below it.
    #[arg(long)]
    pub eta_eps: Option<f64>,
    /// Relative lower limit: η_ε = r_ε / (‖g₀‖ B), from one extra query at x0.
    #[arg(long)]
    pub r_eps: Option<f64>,
    /// Damping of the bisection target.
    #[arg(long, value_enum)]
    pub mode: Option<ModeName>,
    /// Failure probability for the stochastic damping constants.
    #[arg(long)]
    pub delta: Option<f64>,
    /// Almost-sure bound L on stochastic subgradient norms.
    #[arg(long)]
    pub lipschitz: Option<f64>,
    /// Master seed; run i is seeded with seed + i.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Independent repetitions per configuration.
    #[arg(long)]
    pub repetitions: Option<u64>,
    /// Distance of the random start point from the optimum.
    #[arg(long)]
    pub start_distance: Option<f64>,
    /// Output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Write wall_ms as 0 so outputs are bit-identical across runs.
    #[arg(long)]
    pub no_timing: bool,
    /// Include every bisection evaluation in the diagnostics file.
    #[arg(long)]
    pub evaluations: bool,
    /// Tuner round k whose grid the good-event check covers.
    #[arg(long)]
    pub round: Option<u64>,
    /// Monte Carlo paths.
    #[arg(long)]
    pub paths: Option<u64>,
    /// Martingale horizon for the boundary test.
    #[arg(long)]
    pub horizon: Option<u64>,
}
