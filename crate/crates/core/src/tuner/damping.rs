//! Damping constants `(α, β)` of the bisection target.

use serde::{Deserialize, Serialize};

use crate::sgd::SgdTrace;

/// `log₊(x) = max{2, log₂ x}`.
pub fn log2_plus(x: f64) -> f64 {
    if x.is_nan() {
        return 2.0;
    }
    x.log2().max(2.0)
}

/// Round constant `C_k = 2k + log₂(60 · log₂²(6B) / δ)`.
pub fn round_constant(k: u64, budget: u64, delta: f64) -> f64 {
    let l = (6.0 * budget as f64).log2();
    2.0 * k as f64 + (60.0 * l * l / delta).log2()
}

/// How the tuner is asked to damp the bisection target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum TuneMode {
    Deterministic,
    Stochastic {
        delta: f64,
        lipschitz: f64,
    },
    /// Target `r̄ / √(α L² T)`, ignoring observed gradient norms.
    NonAdaptive {
        delta: f64,
        lipschitz: f64,
    },
}

impl TuneMode {
    pub fn lipschitz(&self) -> Option<f64> {
        match self {
            TuneMode::Deterministic => None,
            TuneMode::Stochastic { lipschitz, .. } | TuneMode::NonAdaptive { lipschitz, .. } => {
                Some(*lipschitz)
            }
        }
    }

    pub fn delta(&self) -> Option<f64> {
        match self {
            TuneMode::Deterministic => None,
            TuneMode::Stochastic { delta, .. } | TuneMode::NonAdaptive { delta, .. } => {
                Some(*delta)
            }
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            TuneMode::Deterministic => "deterministic",
            TuneMode::Stochastic { .. } => "stochastic",
            TuneMode::NonAdaptive { .. } => "nonadaptive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DampingKind {
    Deterministic,
    Stochastic {
        k: u64,
        budget: u64,
        delta: f64,
        lipschitz: f64,
    },
    NonAdaptive {
        lipschitz: f64,
    },
    Custom,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DampingParams {
    pub alpha: f64,
    pub beta: f64,
    pub kind: DampingKind,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("trace has r̄ = {r_bar} > 0 but a zero damped denominator")]
pub struct PhiInvariantViolation {
    pub r_bar: f64,
}

impl DampingParams {
    /// `(α, β) = (3, 0)`.
    pub fn deterministic() -> Self {
        DampingParams {
            alpha: 3.0,
            beta: 0.0,
            kind: DampingKind::Deterministic,
        }
    }

    /// `α_k = 32² C_k`, `β_k = (32 C_k L)²`.
    pub fn stochastic(k: u64, budget: u64, delta: f64, lipschitz: f64) -> Self {
        let c = round_constant(k, budget, delta);
        DampingParams {
            alpha: 1024.0 * c,
            beta: (32.0 * c * lipschitz).powi(2),
            kind: DampingKind::Stochastic {
                k,
                budget,
                delta,
                lipschitz,
            },
        }
    }

    /// `α_k = C_k`, no additive term; the target uses `L² T` in place of `G`.
    pub fn nonadaptive(k: u64, budget: u64, delta: f64, lipschitz: f64) -> Self {
        DampingParams {
            alpha: round_constant(k, budget, delta),
            beta: 0.0,
            kind: DampingKind::NonAdaptive { lipschitz },
        }
    }

    pub fn custom(alpha: f64, beta: f64) -> Self {
        DampingParams {
            alpha,
            beta,
            kind: DampingKind::Custom,
        }
    }

    /// `√(α G + β)`, or `√(α L² T)` for the non-adaptive target.
    pub fn denominator(&self, trace: &SgdTrace) -> f64 {
        match self.kind {
            DampingKind::NonAdaptive { lipschitz } => {
                (self.alpha * lipschitz * lipschitz * trace.steps as f64).sqrt()
            }
            _ => (self.alpha * trace.grad_sq_sum + self.beta).sqrt(),
        }
    }

    /// Bisection target `φ(η) = r̄ / √(α G + β)`; zero when both vanish.
    pub fn phi(&self, trace: &SgdTrace) -> Result<f64, PhiInvariantViolation> {
        let den = self.denominator(trace);
        if den == 0.0 {
            if trace.r_bar == 0.0 {
                return Ok(0.0);
            }
            return Err(PhiInvariantViolation { r_bar: trace.r_bar });
        }
        Ok(trace.r_bar / den)
    }
}

/// Damping used by round `k` of the outer loop.
pub fn damping_for_round(k: u64, budget: u64, mode: &TuneMode) -> DampingParams {
    match *mode {
        TuneMode::Deterministic => DampingParams::deterministic(),
        TuneMode::Stochastic { delta, lipschitz } => {
            DampingParams::stochastic(k, budget, delta, lipschitz)
        }
        TuneMode::NonAdaptive { delta, lipschitz } => {
            DampingParams::nonadaptive(k, budget, delta, lipschitz)
        }
    }
}
