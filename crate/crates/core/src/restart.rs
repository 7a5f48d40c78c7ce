//! Restarting the tuner with doubling budgets for strongly convex objectives.

use serde::{Deserialize, Serialize};

use crate::domain::ProjectionDomain;
use crate::linalg::Point;
use crate::oracle::GradientOracle;
use crate::rng::StreamId;
use crate::tuner::{tune, TuneCase, TuneConfig, TuneError, TuneMode};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RestartPlan {
    pub rounds: u32,
    pub epsilon: f64,
    pub delta: f64,
    pub lipschitz: f64,
}

/// Parameters of round `m`: `B_m = 2^m`, `δ_m = δ / (m(m+1))`, `η_ε = ε / (L² B_m)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub m: u32,
    pub budget: u64,
    pub delta: f64,
    pub eta_eps: f64,
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum RestartError {
    #[error("restart plan is invalid: {0}")]
    InvalidPlan(&'static str),
    #[error("round {round}: {source}")]
    Round {
        round: u32,
        #[source]
        source: TuneError,
    },
}

impl RestartPlan {
    pub fn new(rounds: u32, epsilon: f64, delta: f64, lipschitz: f64) -> Self {
        RestartPlan {
            rounds,
            epsilon,
            delta,
            lipschitz,
        }
    }

    pub fn validate(&self) -> Result<(), RestartError> {
        if self.rounds == 0 || self.rounds > 62 {
            return Err(RestartError::InvalidPlan("rounds must lie in 1..=62"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(RestartError::InvalidPlan("delta must lie in (0, 1)"));
        }
        if !(self.epsilon.is_finite() && self.epsilon > 0.0) {
            return Err(RestartError::InvalidPlan("epsilon must be positive"));
        }
        if !(self.lipschitz.is_finite() && self.lipschitz > 0.0) {
            return Err(RestartError::InvalidPlan("L must be positive"));
        }
        Ok(())
    }

    pub fn round(&self, m: u32) -> RoundPlan {
        let budget = 1u64 << m;
        let mf = m as f64;
        RoundPlan {
            m,
            budget,
            delta: self.delta / (mf * (mf + 1.0)),
            eta_eps: self.epsilon / (self.lipschitz * self.lipschitz * budget as f64),
        }
    }

    pub fn schedule(&self) -> Vec<RoundPlan> {
        (1..=self.rounds).map(|m| self.round(m)).collect()
    }

    /// `Σ B_m = 2^(M+1) - 2`.
    pub fn total_budget(&self) -> u64 {
        (1u64 << (self.rounds + 1)) - 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartRound {
    pub plan: RoundPlan,
    pub case: TuneCase,
    pub k_final: u64,
    pub eta_exponent: u64,
    pub steps: u64,
    pub queries: u64,
    pub x_out: Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartResult {
    pub x_final: Point,
    pub rounds: Vec<RestartRound>,
    pub total_queries: u64,
}

/// Runs `M` sequential stochastic-mode tuner rounds, each starting from the
/// previous output. Round `m` uses seed `seed.derive(&[m])`; nothing else is
/// carried between rounds.
pub fn restart_tune<O: GradientOracle + ?Sized>(
    oracle: &O,
    domain: &ProjectionDomain,
    x0: &[f64],
    plan: &RestartPlan,
    seed: StreamId,
) -> Result<RestartResult, RestartError> {
    plan.validate()?;
    let mut x = domain.project(x0);
    let mut rounds = Vec::with_capacity(plan.rounds as usize);
    let mut total = 0;
    for rp in plan.schedule() {
        let mode = TuneMode::Stochastic {
            delta: rp.delta,
            lipschitz: plan.lipschitz,
        };
        let cfg = TuneConfig::new(rp.budget, rp.eta_eps, mode, seed.derive(&[rp.m as u64]));
        let r = tune(oracle, domain, &x, &cfg).map_err(|source| RestartError::Round {
            round: rp.m,
            source,
        })?;
        total += r.total_queries;
        x = r.x_bar;
        rounds.push(RestartRound {
            plan: rp,
            case: r.case,
            k_final: r.k_final,
            eta_exponent: r.eta.exponent,
            steps: r.steps,
            queries: r.total_queries,
            x_out: x.clone(),
        });
    }
    Ok(RestartResult {
        x_final: x,
        rounds,
        total_queries: total,
    })
}
