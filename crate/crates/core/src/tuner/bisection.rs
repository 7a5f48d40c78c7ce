//! Log-scale bisection on the dyadic step-size grid.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::damping::DampingParams;
use super::step::StepSizeExp;
use super::TuneError;
use crate::domain::ProjectionDomain;
use crate::oracle::GradientOracle;
use crate::rng::StreamId;
use crate::sgd::{sgd_run, SgdOptions, SgdTrace};

/// Traces keyed by `(round k, exponent j)`.
pub type TraceCache = BTreeMap<(u64, u64), Arc<SgdTrace>>;

/// Relative slack used when re-checking the output inequalities in floating point.
pub const OUTPUT_PROPERTY_RTOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    PickedHi,
    PickedLo,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub enum BisectionVariant {
    /// `η_hi ≤ φ(η_hi)`: the upper limit must be raised.
    UpperLimitInfeasible,
    /// `η_lo > φ(η_lo)`: the lower limit itself is returned.
    EdgeLow {
        eta_lo: StepSizeExp,
        trace: Arc<SgdTrace>,
    },
    Selected {
        eta_o: StepSizeExp,
        eta_lo_star: StepSizeExp,
        eta_hi_star: StepSizeExp,
        trace: Arc<SgdTrace>,
        branch: Branch,
    },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Evaluation {
    pub eta: StepSizeExp,
    pub phi: f64,
    /// False when the trace came from the cache.
    pub fresh: bool,
    pub trace: Arc<SgdTrace>,
}

impl Evaluation {
    pub fn passes_lower_check(&self) -> bool {
        self.eta.value() <= self.phi
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BisectionOutcome {
    pub variant: BisectionVariant,
    /// Every evaluation of `φ`, in order.
    pub evaluations: Vec<Evaluation>,
    pub midpoint_evaluations: u32,
    pub queries: u64,
}

impl BisectionOutcome {
    pub fn is_infeasible(&self) -> bool {
        matches!(self.variant, BisectionVariant::UpperLimitInfeasible)
    }

    /// Cached trace for an exponent, if this bisection evaluated it.
    pub fn trace_at(&self, exponent: u64) -> Option<&Arc<SgdTrace>> {
        self.evaluations
            .iter()
            .find(|e| e.eta.exponent == exponent)
            .map(|e| &e.trace)
    }
}

/// Everything needed to evaluate `φ` at grid points within one round.
pub struct RoundContext<'a, O: ?Sized> {
    pub oracle: &'a O,
    pub domain: &'a ProjectionDomain,
    pub x0: &'a [f64],
    pub steps: u64,
    pub round: u64,
    pub seed: StreamId,
    pub options: SgdOptions,
    pub cache: &'a mut TraceCache,
    /// Fresh queries spent through this context.
    pub queries: u64,
    /// Fresh-query allowance; `None` means unlimited.
    pub budget: Option<u64>,
}

impl<'a, O: GradientOracle + ?Sized> RoundContext<'a, O> {
    /// Stream for candidate `j` of this round.
    pub fn stream_for(&self, exponent: u64) -> StreamId {
        self.seed.derive(&[self.round, exponent])
    }

    fn trace(
        &mut self,
        eta: StepSizeExp,
        evaluations: &[Evaluation],
    ) -> Result<(Arc<SgdTrace>, bool), TuneError> {
        let key = (self.round, eta.exponent);
        if let Some(t) = self.cache.get(&key) {
            return Ok((Arc::clone(t), false));
        }
        if let Some(limit) = self.budget {
            if self.queries + self.steps > limit {
                return Err(TuneError::BudgetExhausted {
                    round: self.round,
                    used: self.queries,
                    limit,
                    partial: evaluations.to_vec(),
                });
            }
        }
        let value = eta.value();
        if !value.is_finite() {
            return Err(TuneError::StepOverflow {
                round: self.round,
                exponent: eta.exponent,
            });
        }
        let stream = self.stream_for(eta.exponent);
        let trace = sgd_run(
            self.oracle,
            self.domain,
            self.x0,
            value,
            self.steps,
            stream,
            self.options,
        )
        .map_err(|source| TuneError::Sgd {
            round: self.round,
            exponent: eta.exponent,
            source,
        })?;
        self.queries += trace.query_count;
        let trace = Arc::new(trace);
        self.cache.insert(key, Arc::clone(&trace));
        Ok((trace, true))
    }

    fn evaluate(
        &mut self,
        eta: StepSizeExp,
        damping: &DampingParams,
        evaluations: &mut Vec<Evaluation>,
    ) -> Result<Evaluation, TuneError> {
        let (trace, fresh) = self.trace(eta, evaluations)?;
        let phi = damping.phi(&trace).map_err(|e| TuneError::Phi {
            round: self.round,
            exponent: eta.exponent,
            source: e,
        })?;
        let ev = Evaluation {
            eta,
            phi,
            fresh,
            trace,
        };
        evaluations.push(ev.clone());
        Ok(ev)
    }
}

/// Finds `η ∈ {η_lo⋆, η_hi⋆}` with `η_hi⋆ = 2 η_lo⋆` bracketing a sign change of `φ(η) - η`.
///
/// Requires `η_hi / η_lo = 2^(2^k)` with `k ≥ 1` on a common grid. When both
/// endpoint checks pass, exactly `k` midpoints are evaluated.
pub fn root_finding_bisection<O: GradientOracle + ?Sized>(
    ctx: &mut RoundContext<'_, O>,
    eta_lo: StepSizeExp,
    eta_hi: StepSizeExp,
    damping: &DampingParams,
) -> Result<BisectionOutcome, TuneError> {
    if eta_lo.base != eta_hi.base || eta_hi.exponent <= eta_lo.exponent {
        return Err(TuneError::DegenerateInterval {
            lo: eta_lo,
            hi: eta_hi,
        });
    }
    let gap = eta_hi.exponent - eta_lo.exponent;
    if !gap.is_power_of_two() || gap < 2 {
        return Err(TuneError::BadIntervalRatio { gap });
    }

    let start_queries = ctx.queries;
    let mut evaluations = Vec::with_capacity(gap.trailing_zeros() as usize + 2);

    let hi_eval = ctx.evaluate(eta_hi, damping, &mut evaluations)?;
    if hi_eval.passes_lower_check() {
        return Ok(BisectionOutcome {
            variant: BisectionVariant::UpperLimitInfeasible,
            evaluations,
            midpoint_evaluations: 0,
            queries: ctx.queries - start_queries,
        });
    }
    let lo_eval = ctx.evaluate(eta_lo, damping, &mut evaluations)?;
    if !lo_eval.passes_lower_check() {
        return Ok(BisectionOutcome {
            variant: BisectionVariant::EdgeLow {
                eta_lo,
                trace: Arc::clone(&lo_eval.trace),
            },
            evaluations,
            midpoint_evaluations: 0,
            queries: ctx.queries - start_queries,
        });
    }

    let mut lo = lo_eval;
    let mut hi = hi_eval;
    let mut midpoints = 0u32;
    while hi.eta.exponent - lo.eta.exponent > 1 {
        let mid_eta = lo
            .eta
            .geometric_midpoint(&hi.eta)
            .expect("exponent gap stays a power of two");
        let mid = ctx.evaluate(mid_eta, damping, &mut evaluations)?;
        midpoints += 1;
        if mid.passes_lower_check() {
            lo = mid;
        } else {
            hi = mid;
        }
    }

    let hi_value = hi.eta.value();
    let pick_hi = hi.trace.r_bar <= lo.trace.r_bar * hi.phi / hi_value;
    let (eta_o, trace, branch) = if pick_hi {
        (hi.eta, Arc::clone(&hi.trace), Branch::PickedHi)
    } else {
        (lo.eta, Arc::clone(&lo.trace), Branch::PickedLo)
    };
    let outcome = BisectionOutcome {
        variant: BisectionVariant::Selected {
            eta_o,
            eta_lo_star: lo.eta,
            eta_hi_star: hi.eta,
            trace,
            branch,
        },
        evaluations,
        midpoint_evaluations: midpoints,
        queries: ctx.queries - start_queries,
    };
    debug_assert!(
        check_output_property(&outcome, damping).is_none_or(|r| r.holds()),
        "output property violated: {:?}",
        check_output_property(&outcome, damping)
    );
    Ok(outcome)
}

/// The four inequalities satisfied by a `Selected` outcome.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutputPropertyReport {
    /// `r̄(η_o) / (2 √(αG(η_hi⋆)+β)) ≤ η_o`.
    pub lower: (f64, f64),
    /// `η_o ≤ r̄(η_lo⋆) / √(αG(η_o)+β)`.
    pub upper: (f64, f64),
    /// `r̄(η_o) ≤ r̄(η_lo⋆)`.
    pub r_bar: (f64, f64),
    /// `√(αG(η_o)+β) ≤ 2 √(αG(η_hi⋆)+β)`.
    pub denominator: (f64, f64),
}

fn ratio(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}

fn leq(pair: (f64, f64)) -> bool {
    let (a, b) = pair;
    a <= b + OUTPUT_PROPERTY_RTOL * b.abs().max(a.abs())
}

impl OutputPropertyReport {
    pub fn holds(&self) -> bool {
        leq(self.lower) && leq(self.upper) && leq(self.r_bar) && leq(self.denominator)
    }
}

/// Recomputes the output inequalities of a `Selected` outcome from its cached
/// traces; `None` for the other variants.
pub fn check_output_property(
    outcome: &BisectionOutcome,
    damping: &DampingParams,
) -> Option<OutputPropertyReport> {
    let BisectionVariant::Selected {
        eta_o,
        eta_lo_star,
        eta_hi_star,
        ..
    } = &outcome.variant
    else {
        return None;
    };
    let lo = outcome.trace_at(eta_lo_star.exponent)?;
    let hi = outcome.trace_at(eta_hi_star.exponent)?;
    let o = outcome.trace_at(eta_o.exponent)?;
    let eta = eta_o.value();
    let den_hi = damping.denominator(hi);
    let den_o = damping.denominator(o);
    Some(OutputPropertyReport {
        lower: (ratio(o.r_bar, 2.0 * den_hi), eta),
        upper: (eta, ratio(lo.r_bar, den_o)),
        r_bar: (o.r_bar, lo.r_bar),
        denominator: (den_o, 2.0 * den_hi),
    })
}
