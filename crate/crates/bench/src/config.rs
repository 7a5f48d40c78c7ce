//! Run configuration: a TOML file with `[run]`, `[problem]`, `[output]`,
//! `[good_event]` and `[boundary]` sections, overridden by command-line flags.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use clap::ValueEnum;
use pfsgd::problems::ProblemSpec;
use pfsgd::validation::MartingaleSpec;
use pfsgd::TuneMode;
use serde::{Deserialize, Serialize};

use crate::cli::{Command, Overrides};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ModeName {
    Deterministic,
    Stochastic,
    NonAdaptive,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    #[serde(default)]
    pub run: RunSection,
    pub problem: Option<ProblemSpec>,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub good_event: GoodEventSection,
    #[serde(default)]
    pub boundary: BoundarySection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub budget: Option<u64>,
    pub budgets: Option<Vec<u64>>,
    pub rounds: Option<u32>,
    pub epsilon: Option<f64>,
    pub eta_eps: Option<f64>,
    pub r_eps: Option<f64>,
    pub mode: Option<ModeName>,
    pub delta: Option<f64>,
    pub lipschitz: Option<f64>,
    pub seed: Option<u64>,
    pub problem_seed: Option<u64>,
    pub repetitions: Option<u64>,
    pub start_distance: Option<f64>,
    pub x0: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
    pub timing: Option<bool>,
    pub evaluations: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoodEventSection {
    pub round: Option<u64>,
    pub paths: Option<u64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundarySection {
    pub martingale: Option<MartingaleSpec>,
    pub horizon: Option<u64>,
    pub paths: Option<u64>,
}

/// Where `η_ε` comes from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum StepSource {
    Absolute {
        eta_eps: f64,
    },
    /// `η_ε = r_ε / (‖g₀‖ B)` from one extra query at the start point.
    Relative {
        r_eps: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Start {
    Distance(f64),
    Point(Vec<f64>),
}

/// A fully validated configuration.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub problem: Option<ProblemSpec>,
    pub problem_seed: u64,
    pub budget: Option<u64>,
    pub budgets: Vec<u64>,
    pub rounds: Option<u32>,
    pub epsilon: Option<f64>,
    pub step: Option<StepSource>,
    pub mode: ModeName,
    pub delta: f64,
    pub lipschitz: Option<f64>,
    pub master_seed: u64,
    pub repetitions: u64,
    pub start: Start,
    #[serde(skip)]
    pub out_dir: PathBuf,
    pub timing: bool,
    pub evaluations: bool,
    pub ge_round: u64,
    pub paths: u64,
    pub martingale: MartingaleSpec,
    pub horizon: u64,
}

pub const MIN_SWEEP_BUDGETS: usize = 4;
pub const MIN_SWEEP_REPETITIONS: u64 = 20;

pub fn read_file(path: &Path) -> Result<FileConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

fn positive(name: &str, v: f64) -> Result<f64> {
    ensure!(
        v.is_finite() && v > 0.0,
        "{name} must be a positive finite number, got {v}"
    );
    Ok(v)
}

impl RunConfig {
    pub fn resolve(command: Command, file: FileConfig, o: &Overrides) -> Result<Self> {
        let run = file.run;
        let eta_eps = o.eta_eps.or(run.eta_eps);
        let r_eps = o.r_eps.or(run.r_eps);
        let step = match (eta_eps, r_eps) {
            (Some(_), Some(_)) => bail!("run.eta_eps and run.r_eps are both set; give exactly one"),
            (Some(e), None) => Some(StepSource::Absolute {
                eta_eps: positive("run.eta_eps", e)?,
            }),
            (None, Some(r)) => Some(StepSource::Relative {
                r_eps: positive("run.r_eps", r)?,
            }),
            (None, None) => None,
        };
        let repetitions = o.repetitions.or(run.repetitions).unwrap_or(1);
        ensure!(repetitions >= 1, "run.repetitions must be at least 1");
        let start = match (o.start_distance.or(run.start_distance), run.x0) {
            (Some(_), Some(_)) => {
                bail!("run.start_distance and run.x0 are both set; give at most one")
            }
            (Some(d), None) => {
                ensure!(
                    d.is_finite() && d >= 0.0,
                    "run.start_distance must be finite and nonnegative"
                );
                Start::Distance(d)
            }
            (None, Some(x)) => Start::Point(x),
            (None, None) => Start::Distance(1.0),
        };
        let delta = o.delta.or(run.delta).unwrap_or(0.1);
        ensure!(
            delta > 0.0 && delta < 1.0,
            "run.delta must lie in (0, 1), got {delta}"
        );
        if let Some(l) = o.lipschitz.or(run.lipschitz) {
            positive("run.lipschitz", l)?;
        }
        let cfg = RunConfig {
            command,
            problem: file.problem,
            problem_seed: run.problem_seed.unwrap_or(0),
            budget: o.budget.or(run.budget),
            budgets: o.budgets.clone().or(run.budgets).unwrap_or_default(),
            rounds: o.rounds.or(run.rounds),
            epsilon: o.epsilon.or(run.epsilon),
            step,
            mode: o.mode.or(run.mode).unwrap_or(ModeName::Deterministic),
            delta,
            lipschitz: o.lipschitz.or(run.lipschitz),
            master_seed: o.seed.or(run.seed).unwrap_or(0),
            repetitions,
            start,
            out_dir: o
                .out_dir
                .clone()
                .or(file.output.dir)
                .unwrap_or_else(|| PathBuf::from("results")),
            timing: !o.no_timing && file.output.timing.unwrap_or(true),
            evaluations: o.evaluations || file.output.evaluations.unwrap_or(false),
            ge_round: o.round.or(file.good_event.round).unwrap_or(2),
            paths: o
                .paths
                .or(file.good_event.paths.or(file.boundary.paths))
                .unwrap_or(1000),
            martingale: file.boundary.martingale.unwrap_or(MartingaleSpec::FairCoin),
            horizon: o.horizon.or(file.boundary.horizon).unwrap_or(10_000),
        };
        cfg.check_command()?;
        Ok(cfg)
    }

    fn check_command(&self) -> Result<()> {
        let needs_problem = self.command != Command::BoundaryTest;
        if needs_problem {
            ensure!(
                self.problem.is_some(),
                "[problem] section is required for {}",
                self.command.name()
            );
        }
        match self.command {
            Command::Tune | Command::ValidateGoodEvent => {
                ensure!(
                    self.budget.is_some_and(|b| b >= 1),
                    "run.budget must be set to a positive integer"
                );
                ensure!(
                    self.step.is_some(),
                    "exactly one of run.eta_eps / run.r_eps is required"
                );
            }
            Command::Sweep => {
                ensure!(
                    self.step.is_some(),
                    "exactly one of run.eta_eps / run.r_eps is required"
                );
                ensure!(
                    self.budgets.len() >= MIN_SWEEP_BUDGETS,
                    "run.budgets needs at least {MIN_SWEEP_BUDGETS} entries, got {}",
                    self.budgets.len()
                );
                ensure!(
                    self.budgets.iter().all(|&b| b >= 1),
                    "run.budgets entries must be positive"
                );
                ensure!(
                    self.repetitions >= MIN_SWEEP_REPETITIONS,
                    "run.repetitions must be at least {MIN_SWEEP_REPETITIONS} for a sweep"
                );
            }
            Command::Restart => {
                ensure!(
                    self.step.is_none(),
                    "restart derives η_ε from run.epsilon; drop run.eta_eps / run.r_eps"
                );
                let m = self.rounds.context("run.rounds is required for restart")?;
                ensure!((1..=62).contains(&m), "run.rounds must lie in 1..=62");
                positive(
                    "run.epsilon",
                    self.epsilon
                        .context("run.epsilon is required for restart")?,
                )?;
            }
            Command::BoundaryTest => {
                ensure!(self.horizon >= 1, "boundary.horizon must be positive");
            }
        }
        if self.command == Command::ValidateGoodEvent {
            ensure!(
                (1..=32).contains(&self.ge_round),
                "good_event.round must lie in 1..=32"
            );
            let b = self.budget.unwrap_or(0);
            ensure!(
                b >= 2 * self.ge_round,
                "run.budget must be at least 2·good_event.round"
            );
        }
        ensure!(self.paths >= 1, "paths must be positive");
        Ok(())
    }

    /// The tuner mode, with `L` taken from the config or the problem.
    pub fn tune_mode(&self, problem_l: Option<f64>) -> Result<TuneMode> {
        let l = || {
            self.lipschitz.or(problem_l).context(
                "stochastic modes need run.lipschitz or a problem with a known gradient bound",
            )
        };
        Ok(match self.mode {
            ModeName::Deterministic => TuneMode::Deterministic,
            ModeName::Stochastic => TuneMode::Stochastic {
                delta: self.delta,
                lipschitz: l()?,
            },
            ModeName::NonAdaptive => TuneMode::NonAdaptive {
                delta: self.delta,
                lipschitz: l()?,
            },
        })
    }
}
