//! Per-run checks of the tuner's inequalities.
//!
//! Each check is `value ≤ bound` up to [`REL_TOL`]. A failure is "fail" when the
//! inequality is proven for the run at hand (noiseless oracle, or a per-path
//! identity) and "inconclusive" when it only holds with high probability or
//! through a surrogate.

use serde::{Deserialize, Serialize};

use super::{CheckLine, CheckReport, ValidationError, Verdict};
use crate::linalg::{dist, dot, norm, norm_sq, sub};
use crate::oracle::GradientOracle;
use crate::sgd::SgdTrace;
use crate::tuner::{
    check_output_property, eta_max_diagnostic, log2_plus, BisectionVariant, DampingParams,
    EtaMaxForm, TuneCase, TuneMode, TunerResult,
};

/// Relative slack for floating-point comparisons.
pub const REL_TOL: f64 = 1e-10;

fn holds(value: f64, bound: f64, scale: f64) -> bool {
    value <= bound + REL_TOL * scale.abs().max(value.abs()).max(bound.abs()) + 1e-300
}

struct Lines {
    lines: Vec<CheckLine>,
}

impl Lines {
    fn push(&mut self, id: &str, value: f64, bound: f64, scale: f64, proven: bool) -> bool {
        let ok = holds(value, bound, scale);
        let verdict = match (ok, proven) {
            (true, _) => Verdict::Pass,
            (false, true) => Verdict::Fail,
            (false, false) => Verdict::Inconclusive,
        };
        self.lines.push(CheckLine {
            id: id.to_string(),
            value,
            bound,
            verdict,
        });
        ok
    }

    /// Marks failing lines from `from` on as inconclusive: another branch of
    /// a disjunction already covers them.
    fn soften_from(&mut self, from: usize) {
        for l in &mut self.lines[from..] {
            if l.verdict == Verdict::Fail {
                l.verdict = Verdict::Inconclusive;
            }
        }
    }
}

/// `log₂ log₊(x)`.
fn loglog_plus(x: f64) -> f64 {
    log2_plus(x).log2()
}

/// Checks budget, step-count, localization and error bounds of one tuner run.
///
/// `observed_queries` is the count from an instrumented oracle, when available.
pub fn check_theorem_bounds<O: GradientOracle + ?Sized>(
    result: &TunerResult,
    oracle: &O,
    observed_queries: Option<u64>,
) -> Result<CheckReport, ValidationError> {
    let opt = oracle.optimum().ok_or(ValidationError::MissingOptimum)?;
    let x_star = &opt.x_star;
    let f = |x: &[f64]| oracle.value(x).ok_or(ValidationError::MissingValues);
    let g0 = norm(
        &oracle
            .exact_subgradient(&result.x0)
            .ok_or(ValidationError::MissingSideChannel)?,
    );
    let d0 = dist(&result.x0, x_star);
    let gap = f(&result.x_bar)? - opt.f_star;
    let dist_star = dist(&result.x_bar, x_star);
    let gap_scale = opt.f_star.abs() + f(&result.x_bar)?.abs();
    let budget = result.budget as f64;
    let steps = result.steps as f64;
    let eta_eps = result.eta.base;
    let noiseless = oracle.is_noiseless();
    let lipschitz = oracle.norm_bound().or(result.mode.lipschitz());

    let mut out = Lines { lines: Vec::new() };
    out.push("budget", result.total_queries as f64, budget, 0.0, true);
    if let Some(q) = observed_queries {
        out.push("budget_observed", q as f64, budget, 0.0, true);
    }
    if let (Some(outcome), Some(damping)) = (result.final_outcome(), result.final_damping()) {
        if let Some(rep) = check_output_property(outcome, damping) {
            for (id, (a, b)) in [
                ("output_lower", rep.lower),
                ("output_upper", rep.upper),
                ("output_rbar", rep.r_bar),
                ("output_denominator", rep.denominator),
            ] {
                out.push(id, a, b, 0.0, true);
            }
        }
        if matches!(outcome.variant, BisectionVariant::Selected { .. }) {
            let miss = (outcome.midpoint_evaluations as f64 - result.k_final as f64).abs();
            out.push("midpoint_count", miss, 0.0, 0.0, true);
        }
    }

    if result.case == TuneCase::BudgetTooSmall {
        // x̄ = x0, so convexity gives f(x0) - f⋆ ≤ ‖g0‖ d0
        out.push("t_lower_bound", 1.0, 1.0, 0.0, true);
        out.push(
            "small_budget_gap",
            gap,
            27f64.sqrt() * d0 * g0,
            gap_scale,
            true,
        );
        return Ok(CheckReport { lines: out.lines });
    }

    let damping = *result
        .final_damping()
        .expect("terminated round has a record");
    match result.mode {
        TuneMode::Deterministic => deterministic_checks(
            &mut out, result, &damping, d0, g0, dist_star, gap, gap_scale, eta_eps, budget, steps,
            lipschitz, noiseless,
        )?,
        TuneMode::Stochastic { .. } => stochastic_checks(
            &mut out, result, &damping, d0, dist_star, gap, gap_scale, eta_eps, budget, steps,
            lipschitz, noiseless,
        )?,
        TuneMode::NonAdaptive { .. } => {}
    }
    Ok(CheckReport { lines: out.lines })
}

#[allow(clippy::too_many_arguments)]
fn deterministic_checks(
    out: &mut Lines,
    result: &TunerResult,
    damping: &DampingParams,
    d0: f64,
    g0: f64,
    dist_star: f64,
    gap: f64,
    gap_scale: f64,
    eta_eps: f64,
    budget: f64,
    steps: f64,
    lipschitz: Option<f64>,
    proven: bool,
) -> Result<(), ValidationError> {
    let t_bound = (budget / (12.0 * loglog_plus(d0 / (eta_eps * g0)))).max(1.0);
    out.push("t_lower_bound", -steps, -t_bound, 0.0, proven);
    if let Ok(eta_max) = eta_max_diagnostic(d0, g0, damping, EtaMaxForm::Deterministic) {
        let k_bound = 2.0 * loglog_plus(eta_max / eta_eps);
        out.push(
            "terminal_round",
            result.k_final as f64,
            k_bound,
            0.0,
            proven,
        );
    }

    let x_bar = &result.x_bar;
    let k = result.k_final;
    let eta = result.eta;
    let start = out.lines.len();
    let loc = out.push("localization_4d0", dist_star, 4.0 * d0, d0, proven);
    let at = |j: u64| result.trace_cache.get(&(k, j));
    let normal_err = match (at(eta.exponent), at(eta.exponent + 1), lipschitz) {
        (Some(a), Some(b), _) => {
            let s = a.grad_sq_sum.sqrt().max(b.grad_sq_sum.sqrt());
            out.push(
                "error_bound_endpoint_max",
                gap,
                27f64.sqrt() * d0 * s / steps,
                gap_scale,
                proven,
            )
        }
        (_, _, Some(l)) => out.push(
            "error_bound_lipschitz",
            gap,
            27f64.sqrt() * d0 * l / steps.sqrt(),
            gap_scale,
            proven,
        ),
        (Some(a), None, None) => out.push(
            "error_bound_selected_endpoint",
            gap,
            27f64.sqrt() * d0 * a.grad_sq_sum.sqrt() / steps,
            gap_scale,
            proven,
        ),
        _ => false,
    };
    let normal_ok = loc && normal_err;

    let mut edge_ok = false;
    let edge_start = out.lines.len();
    if eta.exponent == 0 {
        if let Some(t) = at(0) {
            let dx = dist(x_bar, &result.x0);
            let a = out.push(
                "edge_distance",
                dx,
                eta_eps * (3.0 * t.grad_sq_sum).sqrt(),
                dx,
                proven,
            );
            let b = out.push(
                "edge_gap",
                gap,
                2.0 * eta_eps * t.grad_sq_sum / steps,
                gap_scale,
                proven,
            );
            edge_ok = a && b;
        }
    }
    if edge_ok {
        out.soften_from(start);
    } else if normal_ok {
        out.soften_from(edge_start);
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn stochastic_checks(
    out: &mut Lines,
    result: &TunerResult,
    damping: &DampingParams,
    d0: f64,
    dist_star: f64,
    gap: f64,
    gap_scale: f64,
    eta_eps: f64,
    budget: f64,
    steps: f64,
    lipschitz: Option<f64>,
    proven: bool,
) -> Result<(), ValidationError> {
    let (alpha, beta) = (damping.alpha, damping.beta);
    if let Some(l) = lipschitz {
        let t_bound = (budget / (8.0 * loglog_plus(d0 / (eta_eps * l)))).max(1.0);
        out.push("stoch_t_lower_bound", -steps, -t_bound, 0.0, proven);
    }
    let x_bar = &result.x_bar;
    let k = result.k_final;
    let outcome = result
        .final_outcome()
        .expect("terminated round has a record");
    match &outcome.variant {
        BisectionVariant::Selected { eta_hi_star, .. } => {
            let hi = result
                .trace_cache
                .get(&(k, eta_hi_star.exponent))
                .expect("final interval endpoints are cached");
            out.push("stoch_localization_6d0", dist_star, 6.0 * d0, d0, proven);
            out.push(
                "stoch_distance_from_start",
                dist(x_bar, &result.x0),
                4.0 * alpha / (alpha - 2.0) * d0,
                d0,
                proven,
            );
            let den = (alpha * hi.grad_sq_sum + beta).sqrt();
            out.push(
                "stoch_error_bound",
                gap,
                (9.0 * alpha - 2.0) / (2.0 * (alpha - 2.0)) * d0 * den / steps,
                gap_scale,
                proven,
            );
        }
        BisectionVariant::EdgeLow { trace, .. } => {
            let q = alpha * trace.grad_sq_sum + beta;
            let dx = dist(x_bar, &result.x0);
            out.push("stoch_edge_distance", dx, eta_eps * q.sqrt(), dx, proven);
            out.push(
                "stoch_edge_gap",
                gap,
                1.25 * (d0 * q.sqrt() + eta_eps * q) / steps,
                gap_scale,
                proven,
            );
        }
        BisectionVariant::UpperLimitInfeasible => {}
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LocalizationTally {
    /// Traces with `η ≤ φ(η)` at `(α, β) = (3, 0)`.
    pub eligible: u64,
    pub violations: u64,
    /// Largest `d̄ / d0` and `r̄ / d0` among eligible traces.
    pub worst_d_bar: f64,
    pub worst_r_bar: f64,
}

impl LocalizationTally {
    pub fn merge(&mut self, other: &LocalizationTally) {
        self.eligible += other.eligible;
        self.violations += other.violations;
        self.worst_d_bar = self.worst_d_bar.max(other.worst_d_bar);
        self.worst_r_bar = self.worst_r_bar.max(other.worst_r_bar);
    }
}

/// Checks `d̄ ≤ 2d0` and `r̄ ≤ 3d0` on every recorded noiseless trace satisfying `η ≤ φ(η)`.
pub fn check_localization<'a>(
    traces: impl IntoIterator<Item = &'a SgdTrace>,
    x_star: &[f64],
) -> Result<LocalizationTally, ValidationError> {
    let damping = DampingParams::deterministic();
    let mut tally = LocalizationTally::default();
    for t in traces {
        let phi = damping.phi(t).unwrap_or(f64::INFINITY);
        if t.eta > phi {
            continue;
        }
        let rec = t.record().map_err(|_| ValidationError::MissingRecord)?;
        let d0 = dist(&t.x0, x_star);
        let d_bar = rec
            .iterates
            .iter()
            .map(|x| dist(x, x_star))
            .fold(0.0, f64::max);
        tally.eligible += 1;
        let ok = holds(d_bar, 2.0 * d0, d0) && holds(t.r_bar, 3.0 * d0, d0);
        if !ok {
            tally.violations += 1;
        }
        if d0 > 0.0 {
            tally.worst_d_bar = tally.worst_d_bar.max(d_bar / d0);
            tally.worst_r_bar = tally.worst_r_bar.max(t.r_bar / d0);
        }
    }
    Ok(tally)
}

/// Step-level inequalities of one recorded trace against a known optimum.
pub fn check_trace_inequalities<O: GradientOracle + ?Sized>(
    trace: &SgdTrace,
    oracle: &O,
) -> Result<CheckReport, ValidationError> {
    let rec = trace.record().map_err(|_| ValidationError::MissingRecord)?;
    let opt = oracle.optimum().ok_or(ValidationError::MissingOptimum)?;
    let x_star = &opt.x_star;
    let eta = trace.eta;
    let steps = trace.steps as f64;
    let mut out = Lines { lines: Vec::new() };

    let (x_avg, r_bar, g_sum) = rec.statistics();
    let same = x_avg == trace.x_avg && r_bar == trace.r_bar && g_sum == trace.grad_sq_sum;
    out.push("trace_recompute", (!same) as u8 as f64, 0.0, 0.0, true);
    out.push(
        "trace_rbar",
        trace.r_bar,
        eta * (steps * trace.grad_sq_sum).sqrt(),
        trace.r_bar,
        true,
    );
    out.push(
        "trace_g0",
        trace.g0_norm * trace.g0_norm,
        trace.grad_sq_sum,
        trace.grad_sq_sum,
        true,
    );

    let d0 = dist(&rec.iterates[0], x_star);
    let mut worst_step = f64::NEG_INFINITY;
    let mut worst_growth = f64::NEG_INFINITY;
    let mut gap_sum = 0.0;
    let mut noise_sum = 0.0;
    let mut prefix_g = 0.0;
    let mut scale: f64 = d0 * d0;
    for (i, g) in rec.gradients.iter().enumerate() {
        let x = &rec.iterates[i];
        let y = &rec.iterates[i + 1];
        let di = dist(x, x_star);
        let dn = dist(y, x_star);
        let diff = sub(x, x_star);
        let rhs = di * di - 2.0 * eta * dot(g, &diff) + eta * eta * norm_sq(g);
        worst_step = worst_step.max(dn * dn - rhs);
        prefix_g += norm_sq(g);
        worst_growth = worst_growth.max(dn * dn - (d0 * d0 + eta * eta * prefix_g));
        scale = scale.max(di * di + eta * eta * prefix_g);
        let exact = oracle
            .exact_subgradient(x)
            .ok_or(ValidationError::MissingSideChannel)?;
        let fx = oracle.value(x).ok_or(ValidationError::MissingValues)?;
        gap_sum += fx - opt.f_star;
        noise_sum += dot(&sub(g, &exact), &sub(x_star, x));
    }
    out.push("subgradient_step", worst_step, 0.0, scale, true);
    if oracle.is_noiseless() {
        out.push("noiseless_growth", worst_growth, 0.0, scale, true);
    }
    let bound = trace.r_bar * d0 / (eta * steps)
        + eta * trace.grad_sq_sum / (2.0 * steps)
        + noise_sum / steps;
    let bscale = (trace.r_bar * d0 / (eta * steps)).abs()
        + (noise_sum / steps).abs()
        + gap_sum.abs() / steps;
    out.push(
        "error_bound_realization",
        gap_sum / steps,
        bound,
        bscale,
        true,
    );
    Ok(CheckReport { lines: out.lines })
}
