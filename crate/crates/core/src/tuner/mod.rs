//! Parameter-free step-size tuning.
//!
//! The outer loop tries upper bisection limits `2^(2^k) η_ε` for
//! `k = 2, 4, 8, …`, running SGD for `T_k = ⌊B / 2k⌋` steps per candidate,
//! until the log-scale bisection of [`root_finding_bisection`] brackets a
//! sign change of `φ(η) - η`. The averaged iterate of the selected step size
//! is returned. Total oracle usage never exceeds the budget `B`: failed rounds
//! cost `T_k` each and the final round at most `(k + 2) T_k`.

mod bisection;
mod damping;
mod step;

use std::sync::Arc;

use serde::{Deserialize, Serialize};

pub use bisection::{
    check_output_property, root_finding_bisection, BisectionOutcome, BisectionVariant, Branch,
    Evaluation, OutputPropertyReport, RoundContext, TraceCache, OUTPUT_PROPERTY_RTOL,
};
pub use damping::{
    damping_for_round, log2_plus, round_constant, DampingKind, DampingParams,
    PhiInvariantViolation, TuneMode,
};
pub use step::StepSizeExp;

use crate::domain::ProjectionDomain;
use crate::linalg::{norm, Point};
use crate::oracle::GradientOracle;
use crate::rng::StreamId;
use crate::sgd::{SgdError, SgdOptions, SgdTrace};

#[derive(Debug, Clone, thiserror::Error)]
pub enum TuneError {
    #[error("gradient budget must be at least 1")]
    InvalidBudget,
    #[error("initial step size must be finite and positive, got {0}")]
    InvalidEtaEps(f64),
    #[error("failure probability must lie in (0, 1), got {0}")]
    InvalidDelta(f64),
    #[error("{0} mode needs a finite positive gradient bound L")]
    MissingLipschitz(&'static str),
    #[error("bisection interval [{lo}, {hi}] is empty or off-grid")]
    DegenerateInterval { lo: StepSizeExp, hi: StepSizeExp },
    #[error("bisection interval exponent gap {gap} is not 2^k with k >= 1")]
    BadIntervalRatio { gap: u64 },
    #[error("step size 2^{exponent}·η_ε overflows at round {round}")]
    StepOverflow { round: u64, exponent: u64 },
    #[error("round {round}: {used} queries used, next evaluation exceeds limit {limit}")]
    BudgetExhausted {
        round: u64,
        used: u64,
        limit: u64,
        partial: Vec<Evaluation>,
    },
    #[error("round {round}, exponent {exponent}: {source}")]
    Sgd {
        round: u64,
        exponent: u64,
        #[source]
        source: SgdError,
    },
    #[error("round {round}, exponent {exponent}: {source}")]
    Phi {
        round: u64,
        exponent: u64,
        #[source]
        source: PhiInvariantViolation,
    },
    #[error("first gradient is zero, relative initial step size is undefined")]
    ZeroInitialGradient,
    #[error("oracle query failed: {0}")]
    Oracle(SgdError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneConfig {
    pub budget: u64,
    pub eta_eps: f64,
    pub mode: TuneMode,
    pub seed: StreamId,
    pub options: SgdOptions,
}

impl TuneConfig {
    pub fn new(budget: u64, eta_eps: f64, mode: TuneMode, seed: StreamId) -> Self {
        TuneConfig {
            budget,
            eta_eps,
            mode,
            seed,
            options: SgdOptions::default(),
        }
    }

    pub fn record_full(mut self, on: bool) -> Self {
        self.options.record_full = on;
        self
    }

    pub fn track_best(mut self, on: bool) -> Self {
        self.options.track_best = on;
        self
    }

    fn validate(&self) -> Result<(), TuneError> {
        if self.budget == 0 {
            return Err(TuneError::InvalidBudget);
        }
        if !(self.eta_eps.is_finite() && self.eta_eps > 0.0) {
            return Err(TuneError::InvalidEtaEps(self.eta_eps));
        }
        if let Some(delta) = self.mode.delta() {
            if !(delta > 0.0 && delta < 1.0) {
                return Err(TuneError::InvalidDelta(delta));
            }
        }
        if let Some(l) = self.mode.lipschitz() {
            if !(l.is_finite() && l > 0.0) {
                return Err(TuneError::MissingLipschitz(self.mode.name()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TuneCase {
    Normal,
    EdgeLowStep,
    BudgetTooSmall,
}

impl TuneCase {
    pub fn as_str(&self) -> &'static str {
        match self {
            TuneCase::Normal => "Normal",
            TuneCase::EdgeLowStep => "EdgeLowStep",
            TuneCase::BudgetTooSmall => "BudgetTooSmall",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RoundRecord {
    pub k: u64,
    pub steps: u64,
    pub damping: DampingParams,
    pub outcome: BisectionOutcome,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TunerResult {
    pub x0: Point,
    pub x_bar: Point,
    pub eta: StepSizeExp,
    pub eta_prime_interval: (f64, f64),
    pub steps: u64,
    pub k_final: u64,
    pub total_queries: u64,
    pub case: TuneCase,
    /// Output after the small-first-gradient post-processing rule.
    pub z: Point,
    pub budget: u64,
    pub mode: TuneMode,
    pub rounds: Vec<RoundRecord>,
    #[serde(skip)]
    pub trace_cache: TraceCache,
    pub best_observed: Option<(Point, f64)>,
}

impl TunerResult {
    /// Damping used in the terminal round.
    pub fn final_damping(&self) -> Option<&DampingParams> {
        self.rounds.last().map(|r| &r.damping)
    }

    pub fn final_outcome(&self) -> Option<&BisectionOutcome> {
        self.rounds.last().map(|r| &r.outcome)
    }

    /// Cached trace at `2^j η_ε` in the terminal round.
    pub fn final_trace(&self, exponent: u64) -> Option<&Arc<SgdTrace>> {
        self.trace_cache.get(&(self.k_final, exponent))
    }
}

/// Runs the doubling outer loop with budget `config.budget`.
pub fn tune<O: GradientOracle + ?Sized>(
    oracle: &O,
    domain: &ProjectionDomain,
    x0: &[f64],
    config: &TuneConfig,
) -> Result<TunerResult, TuneError> {
    config.validate()?;
    let budget = config.budget;
    let start = domain.project(x0);
    let base = StepSizeExp::new(config.eta_eps, 0);
    let mut cache = TraceCache::new();
    let mut rounds = Vec::new();
    let mut total_queries = 0u64;

    let mut k = 2u64;
    loop {
        if 4 * k > budget {
            return Ok(TunerResult {
                x_bar: start.clone(),
                z: start.clone(),
                x0: start,
                eta: base,
                eta_prime_interval: (base.value(), 2.0 * base.value()),
                steps: 1,
                k_final: k,
                total_queries,
                case: TuneCase::BudgetTooSmall,
                budget,
                mode: config.mode,
                rounds,
                best_observed: best_over(&cache),
                trace_cache: cache,
            });
        }
        let steps = budget / (2 * k);
        let damping = damping_for_round(k, budget, &config.mode);
        if k >= 64 {
            return Err(TuneError::StepOverflow {
                round: k,
                exponent: u64::MAX,
            });
        }
        let upper = base.with_exponent(1u64 << k);
        let mut ctx = RoundContext {
            oracle,
            domain,
            x0: &start,
            steps,
            round: k,
            seed: config.seed,
            options: config.options,
            cache: &mut cache,
            queries: 0,
            budget: Some(budget - total_queries),
        };
        let outcome = root_finding_bisection(&mut ctx, base, upper, &damping)?;
        total_queries += ctx.queries;
        let (case, eta, trace) = match &outcome.variant {
            BisectionVariant::UpperLimitInfeasible => None,
            BisectionVariant::EdgeLow { eta_lo, trace } => {
                Some((TuneCase::EdgeLowStep, *eta_lo, Arc::clone(trace)))
            }
            BisectionVariant::Selected { eta_o, trace, .. } => {
                Some((TuneCase::Normal, *eta_o, Arc::clone(trace)))
            }
        }
        .map_or((None, base, None), |(c, e, t)| (Some(c), e, Some(t)));
        rounds.push(RoundRecord {
            k,
            steps,
            damping,
            outcome,
        });

        if let (Some(case), Some(trace)) = (case, trace) {
            let x_bar = trace.x_avg.clone();
            let at_eps = cache
                .get(&(k, 0))
                .expect("lower endpoint is evaluated whenever the round terminates");
            let z = output_z(&start, &x_bar, eta, at_eps);
            return Ok(TunerResult {
                x0: start,
                x_bar,
                eta,
                eta_prime_interval: (eta.value(), 2.0 * eta.value()),
                steps,
                k_final: k,
                total_queries,
                case,
                z,
                budget,
                mode: config.mode,
                rounds,
                best_observed: best_over(&cache),
                trace_cache: cache,
            });
        }
        k *= 2;
    }
}

fn best_over(cache: &TraceCache) -> Option<(Point, f64)> {
    cache
        .values()
        .filter_map(|t| t.best_observed.as_ref())
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .cloned()
}

/// True when the post-processing rule keeps `x_0`.
pub fn z_keeps_start(eta_exponent: u64, g0_norm: f64, grad_sq_sum: f64, steps: u64) -> bool {
    eta_exponent == 0 && g0_norm <= grad_sq_sum.sqrt() / steps as f64
}

fn output_z(x0: &[f64], x_bar: &[f64], eta: StepSizeExp, at_eps: &SgdTrace) -> Point {
    if z_keeps_start(
        eta.exponent,
        at_eps.g0_norm,
        at_eps.grad_sq_sum,
        at_eps.steps,
    ) {
        x0.to_vec()
    } else {
        x_bar.to_vec()
    }
}

/// Post-processed output: `x_0` when the selected step is `η_ε` and
/// `‖g_0‖ ≤ √G_T(η_ε) / T`, otherwise `x̄`.
pub fn select_output_z(result: &TunerResult, trace_at_eps: &SgdTrace) -> Point {
    if result.case == TuneCase::BudgetTooSmall {
        return result.x0.clone();
    }
    output_z(&result.x0, &result.x_bar, result.eta, trace_at_eps)
}

/// Which localization bound limits the terminal step size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EtaMaxForm {
    Deterministic,
    Stochastic,
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("eta_max needs alpha > {min}, got {alpha}")]
pub struct EtaMaxError {
    pub alpha: f64,
    pub min: f64,
}

/// Step size above which `η > φ(η)` is guaranteed:
/// `2α/(α-1) · d0/√(α‖g0‖² + β)` (deterministic) or `4α/(α-2) · …` (stochastic).
pub fn eta_max_diagnostic(
    d0: f64,
    g0_norm: f64,
    damping: &DampingParams,
    form: EtaMaxForm,
) -> Result<f64, EtaMaxError> {
    let alpha = damping.alpha;
    let factor = match form {
        EtaMaxForm::Deterministic => {
            if alpha <= 1.0 {
                return Err(EtaMaxError { alpha, min: 1.0 });
            }
            2.0 * alpha / (alpha - 1.0)
        }
        EtaMaxForm::Stochastic => {
            if alpha <= 2.0 {
                return Err(EtaMaxError { alpha, min: 2.0 });
            }
            4.0 * alpha / (alpha - 2.0)
        }
    };
    if d0 == 0.0 {
        return Ok(0.0);
    }
    let den = (alpha * g0_norm * g0_norm + damping.beta).sqrt();
    Ok(if den == 0.0 {
        f64::INFINITY
    } else {
        factor * d0 / den
    })
}

/// Largest round index the doubling loop can reach: `2 log₂ log₊(η_max / η_ε)`.
pub fn terminal_round_bound(eta_max: f64, eta_eps: f64) -> f64 {
    2.0 * log2_plus(eta_max / eta_eps).log2()
}

/// `η_ε = r_ε / (‖g_0‖ B)` from one dedicated oracle call at `x0`.
///
/// The call is not part of the tuner's budget; the returned count is for
/// separate reporting.
pub fn relative_eta_eps<O: GradientOracle + ?Sized>(
    oracle: &O,
    domain: &ProjectionDomain,
    x0: &[f64],
    r_eps: f64,
    budget: u64,
    seed: StreamId,
) -> Result<(f64, f64), TuneError> {
    if oracle.dimension() != x0.len() {
        return Err(TuneError::Oracle(SgdError::DimensionMismatch {
            expected: oracle.dimension(),
            got: x0.len(),
        }));
    }
    let start = domain.project(x0);
    let mut g = vec![0.0; start.len()];
    let stream = seed.derive(&[0]);
    oracle.query(&start, &mut stream.draw(0), &mut g);
    let g0 = norm(&g);
    if !g0.is_finite() {
        return Err(TuneError::Oracle(SgdError::NumericalFailure {
            step: 0,
            quantity: "gradient",
        }));
    }
    if g0 == 0.0 {
        return Err(TuneError::ZeroInitialGradient);
    }
    if budget == 0 {
        return Err(TuneError::InvalidBudget);
    }
    Ok((r_eps / (g0 * budget as f64), g0))
}
