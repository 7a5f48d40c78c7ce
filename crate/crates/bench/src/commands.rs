use std::time::Instant;

use anyhow::{ensure, Context, Result};
use pfsgd::linalg::dist;
use pfsgd::oracle::CountingOracle;
use pfsgd::problems::{make_problem, Problem};
use pfsgd::restart::{restart_tune, RestartPlan};
use pfsgd::tuner::{relative_eta_eps, BisectionVariant, DampingParams};
use pfsgd::validation::{
    boundary_crossing_test, check_theorem_bounds, clopper_pearson, good_event_frequency,
    loglog_fit, median, CheckLine, SlopeFit, Verdict,
};
use pfsgd::{tune, GradientOracle, StreamId, TuneConfig, TuneMode, TunerResult};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::cli::Command;
use crate::config::{RunConfig, Start, StepSource};
use crate::output::{Outputs, RunRow, SCHEMA_VERSION};

const CONFIDENCE: f64 = 0.99;

pub struct Report {
    pub outputs: Outputs,
    /// Proven inequalities that failed, across all runs.
    pub failures: u64,
    pub headline: String,
}

/// Validates everything that can fail before any run starts.
pub fn prepare(cfg: &RunConfig) -> Result<Option<Problem>> {
    let Some(spec) = &cfg.problem else {
        return Ok(None);
    };
    let p = make_problem(spec, cfg.problem_seed).context("invalid [problem] section")?;
    if let Start::Point(x) = &cfg.start {
        ensure!(
            x.len() == p.dimension(),
            "run.x0 has {} coordinates but problem.dimension is {}",
            x.len(),
            p.dimension()
        );
        ensure!(x.iter().all(|v| v.is_finite()), "run.x0 must be finite");
    }
    if cfg.command != Command::BoundaryTest && cfg.command != Command::Restart {
        cfg.tune_mode(p.lipschitz())?;
    }
    if matches!(cfg.command, Command::Restart | Command::ValidateGoodEvent) {
        cfg.lipschitz
            .or(p.lipschitz())
            .context("this command needs run.lipschitz or a problem with a known gradient bound")?;
    }
    Ok(Some(p))
}

pub fn execute(cfg: &RunConfig, problem: Option<&Problem>) -> Result<Report> {
    match (cfg.command, problem) {
        (Command::BoundaryTest, _) => Ok(boundary(cfg)),
        (Command::Tune, Some(p)) => tune_command(cfg, p),
        (Command::Sweep, Some(p)) => sweep(cfg, p),
        (Command::Restart, Some(p)) => restart(cfg, p),
        (Command::ValidateGoodEvent, Some(p)) => good_event(cfg, p),
        _ => unreachable!("prepare guarantees a problem"),
    }
}

fn run_seed(cfg: &RunConfig, run_id: u64) -> u64 {
    cfg.master_seed.wrapping_add(run_id)
}

fn start_point(cfg: &RunConfig, p: &Problem, seed: u64) -> Vec<f64> {
    match &cfg.start {
        Start::Point(x) => x.clone(),
        Start::Distance(d) => p.start_at_distance(*d, StreamId::new(seed).derive(&[u64::MAX])),
    }
}

fn count_failures(lines: &[CheckLine]) -> u64 {
    lines.iter().filter(|l| l.verdict == Verdict::Fail).count() as u64
}

fn check(id: &str, value: f64, bound: f64, proven: bool) -> CheckLine {
    let verdict = match (value <= bound, proven) {
        (true, _) => Verdict::Pass,
        (false, true) => Verdict::Fail,
        (false, false) => Verdict::Inconclusive,
    };
    CheckLine {
        id: id.to_string(),
        value,
        bound,
        verdict,
    }
}

fn variant_name(v: &BisectionVariant) -> &'static str {
    match v {
        BisectionVariant::UpperLimitInfeasible => "upper-limit-infeasible",
        BisectionVariant::EdgeLow { .. } => "edge-low",
        BisectionVariant::Selected { .. } => "selected",
    }
}

fn round_details(r: &TunerResult) -> Value {
    r.rounds
        .iter()
        .map(|round| {
            let evals: Vec<Value> = round
                .outcome
                .evaluations
                .iter()
                .map(|e| {
                    json!({
                        "exponent": e.eta.exponent,
                        "eta": e.eta.value(),
                        "phi": e.phi,
                        "fresh": e.fresh,
                        "r_bar": e.trace.r_bar,
                        "grad_sq_sum": e.trace.grad_sq_sum,
                    })
                })
                .collect();
            json!({
                "k": round.k,
                "steps": round.steps,
                "alpha": round.damping.alpha,
                "beta": round.damping.beta,
                "variant": variant_name(&round.outcome.variant),
                "midpoints": round.outcome.midpoint_evaluations,
                "queries": round.outcome.queries,
                "evaluations": evals,
            })
        })
        .collect()
}

struct RunOutcome {
    row: RunRow,
    diagnostics: Value,
    failures: u64,
}

fn tune_once(cfg: &RunConfig, p: &Problem, mode: TuneMode, budget: u64, run_id: u64) -> RunOutcome {
    let seed = run_seed(cfg, run_id);
    let stream = StreamId::new(seed);
    let x0 = start_point(cfg, p, seed);
    let clock = Instant::now();
    let step = match cfg.step.expect("validated") {
        StepSource::Absolute { eta_eps } => Ok((eta_eps, None)),
        StepSource::Relative { r_eps } => {
            relative_eta_eps(p, p.domain(), &x0, r_eps, budget, stream).map(|(e, g)| (e, Some(g)))
        }
    };
    let counted = CountingOracle::new(p);
    let result = step.clone().and_then(|(eta_eps, _)| {
        let tc = TuneConfig::new(budget, eta_eps, mode, stream);
        tune(&counted, p.domain(), &x0, &tc)
    });
    let wall_ms = if cfg.timing {
        clock.elapsed().as_millis() as u64
    } else {
        0
    };
    let (eta_eps, g0) = step.map(|(e, g)| (Some(e), g)).unwrap_or((None, None));
    match result {
        Ok(r) => {
            let (lines, check_error) = match check_theorem_bounds(&r, p, Some(counted.count())) {
                Ok(rep) => (rep.lines, None),
                Err(e) => (Vec::new(), Some(e.to_string())),
            };
            let failures = count_failures(&lines);
            let row = RunRow {
                run_id,
                seed,
                k_final: Some(r.k_final),
                steps: Some(r.steps),
                eta_o_exponent: Some(r.eta.exponent),
                total_queries: Some(r.total_queries),
                gap: Some(p.gap(&r.x_bar)),
                dist_to_opt: Some(dist(&r.x_bar, p.x_star())),
                case: r.case.as_str().to_string(),
                wall_ms,
                budget,
            };
            let mut diagnostics = json!({
                "run_id": run_id,
                "seed": seed,
                "budget": budget,
                "eta_eps": eta_eps,
                "g0_norm": g0,
                "case": r.case.as_str(),
                "eta_o_exponent": r.eta.exponent,
                "eta_o": r.eta.value(),
                "counted_queries": counted.count(),
                "checks": lines,
                "check_error": check_error,
            });
            if cfg.evaluations {
                diagnostics["rounds"] = round_details(&r);
            }
            RunOutcome {
                row,
                diagnostics,
                failures,
            }
        }
        Err(e) => RunOutcome {
            row: RunRow {
                run_id,
                seed,
                k_final: None,
                steps: None,
                eta_o_exponent: None,
                total_queries: Some(counted.count()),
                gap: None,
                dist_to_opt: None,
                case: "error".to_string(),
                wall_ms,
                budget,
            },
            diagnostics: json!({
                "run_id": run_id,
                "seed": seed,
                "budget": budget,
                "eta_eps": eta_eps,
                "error": e.to_string(),
            }),
            failures: 0,
        },
    }
}

fn header(cfg: &RunConfig) -> Value {
    json!({ "version": SCHEMA_VERSION, "command": cfg.command.name(), "config": cfg })
}

fn collect(outcomes: Vec<RunOutcome>) -> (Vec<RunRow>, Vec<Value>, u64) {
    let failures = outcomes.iter().map(|o| o.failures).sum();
    let (rows, diags) = outcomes.into_iter().map(|o| (o.row, o.diagnostics)).unzip();
    (rows, diags, failures)
}

fn tune_command(cfg: &RunConfig, p: &Problem) -> Result<Report> {
    let mode = cfg.tune_mode(p.lipschitz())?;
    let budget = cfg.budget.expect("validated");
    let outcomes: Vec<RunOutcome> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|i| tune_once(cfg, p, mode, budget, i))
        .collect();
    let (rows, diagnostics, failures) = collect(outcomes);
    let gaps: Vec<f64> = rows.iter().filter_map(|r| r.gap).collect();
    let errors = rows.iter().filter(|r| r.gap.is_none()).count();
    let med = (!gaps.is_empty()).then(|| median(&gaps));
    let mut summary = header(cfg);
    summary["runs"] = json!(rows.len());
    summary["errors"] = json!(errors);
    summary["median_gap"] = json!(med);
    summary["failed_checks"] = json!(failures);
    Ok(Report {
        headline: format!(
            "tune: {} runs, {errors} errors, median gap {}, {failures} failed checks",
            rows.len(),
            med.map_or("n/a".to_string(), |g| format!("{g:e}"))
        ),
        outputs: Outputs {
            rows: Some(rows),
            diagnostics,
            summary,
        },
        failures,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub budget: u64,
    pub runs: usize,
    pub median_gap: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepSummary {
    pub points: Vec<SweepPoint>,
    /// Least-squares fit of `log₂ median gap` on `log₂ B`; absent when a median is not positive.
    pub fit: Option<SlopeFit>,
}

pub fn summarize_sweep(budgets: &[u64], gaps: &[Vec<f64>]) -> SweepSummary {
    let points: Vec<SweepPoint> = budgets
        .iter()
        .zip(gaps)
        .map(|(&budget, g)| SweepPoint {
            budget,
            runs: g.len(),
            median_gap: (!g.is_empty()).then(|| median(g)),
        })
        .collect();
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| p.median_gap.map(|g| (p.budget as f64, g)))
        .collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = usable.into_iter().unzip();
    let fit = if xs.len() >= 3 {
        loglog_fit(&xs, &ys, 0.95)
    } else {
        None
    };
    SweepSummary { points, fit }
}

fn sweep(cfg: &RunConfig, p: &Problem) -> Result<Report> {
    let mode = cfg.tune_mode(p.lipschitz())?;
    let reps = cfg.repetitions;
    let jobs: Vec<(u64, u64)> = cfg
        .budgets
        .iter()
        .enumerate()
        .flat_map(|(i, &b)| (0..reps).map(move |r| (b, i as u64 * reps + r)))
        .collect();
    let outcomes: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(b, run_id)| tune_once(cfg, p, mode, b, run_id))
        .collect();
    let (rows, diagnostics, failures) = collect(outcomes);
    let gaps: Vec<Vec<f64>> = rows
        .chunks(reps as usize)
        .map(|c| c.iter().filter_map(|r| r.gap).collect())
        .collect();
    let s = summarize_sweep(&cfg.budgets, &gaps);
    let mut summary = header(cfg);
    summary["sweep"] = json!(s);
    summary["failed_checks"] = json!(failures);
    let headline = match &s.fit {
        Some(f) => format!(
            "sweep: slope {:.3} (95% CI [{:.3}, {:.3}]) over {} budgets, {failures} failed checks",
            f.slope,
            f.ci.0,
            f.ci.1,
            s.points.len()
        ),
        None => format!("sweep: no fit (a median gap is not positive), {failures} failed checks"),
    };
    Ok(Report {
        outputs: Outputs {
            rows: Some(rows),
            diagnostics,
            summary,
        },
        failures,
        headline,
    })
}

fn restart(cfg: &RunConfig, p: &Problem) -> Result<Report> {
    let l = cfg.lipschitz.or(p.lipschitz()).expect("checked in prepare");
    let rounds = cfg.rounds.expect("validated");
    let plan = RestartPlan::new(rounds, cfg.epsilon.expect("validated"), cfg.delta, l);
    plan.validate()?;
    let outcomes: Vec<RunOutcome> = (0..cfg.repetitions)
        .into_par_iter()
        .map(|run_id| {
            let seed = run_seed(cfg, run_id);
            let x0 = start_point(cfg, p, seed);
            let clock = Instant::now();
            let counted = CountingOracle::new(p);
            let res = restart_tune(&counted, p.domain(), &x0, &plan, StreamId::new(seed));
            let wall_ms = if cfg.timing {
                clock.elapsed().as_millis() as u64
            } else {
                0
            };
            let budget = plan.total_budget();
            match res {
                Ok(r) => {
                    let last = r.rounds.last().expect("at least one round");
                    let mut lines = vec![
                        check(
                            "restart_budget",
                            r.total_queries as f64,
                            budget as f64,
                            true,
                        ),
                        check(
                            "restart_budget_observed",
                            counted.count() as f64,
                            budget as f64,
                            true,
                        ),
                    ];
                    for round in &r.rounds {
                        lines.push(check(
                            &format!("round_{}_budget", round.plan.m),
                            round.queries as f64,
                            round.plan.budget as f64,
                            true,
                        ));
                    }
                    let failures = count_failures(&lines);
                    RunOutcome {
                        row: RunRow {
                            run_id,
                            seed,
                            k_final: Some(last.k_final),
                            steps: Some(last.steps),
                            eta_o_exponent: Some(last.eta_exponent),
                            total_queries: Some(r.total_queries),
                            gap: Some(p.gap(&r.x_final)),
                            dist_to_opt: Some(dist(&r.x_final, p.x_star())),
                            case: last.case.as_str().to_string(),
                            wall_ms,
                            budget,
                        },
                        diagnostics: json!({
                            "run_id": run_id,
                            "seed": seed,
                            "budget": budget,
                            "checks": lines,
                            "rounds": r.rounds.iter().map(|rr| json!({
                                "m": rr.plan.m,
                                "budget": rr.plan.budget,
                                "delta": rr.plan.delta,
                                "eta_eps": rr.plan.eta_eps,
                                "case": rr.case.as_str(),
                                "k_final": rr.k_final,
                                "eta_o_exponent": rr.eta_exponent,
                                "steps": rr.steps,
                                "queries": rr.queries,
                                "gap": p.gap(&rr.x_out),
                            })).collect::<Vec<_>>(),
                        }),
                        failures,
                    }
                }
                Err(e) => RunOutcome {
                    row: RunRow {
                        run_id,
                        seed,
                        k_final: None,
                        steps: None,
                        eta_o_exponent: None,
                        total_queries: Some(counted.count()),
                        gap: None,
                        dist_to_opt: None,
                        case: "error".to_string(),
                        wall_ms,
                        budget,
                    },
                    diagnostics: json!({ "run_id": run_id, "seed": seed, "error": e.to_string() }),
                    failures: 0,
                },
            }
        })
        .collect();
    let (rows, diagnostics, failures) = collect(outcomes);
    let gaps: Vec<f64> = rows.iter().filter_map(|r| r.gap).collect();
    let med = (!gaps.is_empty()).then(|| median(&gaps));
    let mut summary = header(cfg);
    summary["runs"] = json!(rows.len());
    summary["median_gap"] = json!(med);
    summary["total_budget"] = json!(plan.total_budget());
    summary["failed_checks"] = json!(failures);
    Ok(Report {
        headline: format!(
            "restart: M={rounds}, {} chains, median gap {}, {failures} failed checks",
            rows.len(),
            med.map_or("n/a".to_string(), |g| format!("{g:e}"))
        ),
        outputs: Outputs {
            rows: Some(rows),
            diagnostics,
            summary,
        },
        failures,
    })
}

fn good_event(cfg: &RunConfig, p: &Problem) -> Result<Report> {
    let l = cfg.lipschitz.or(p.lipschitz()).expect("checked in prepare");
    let k = cfg.ge_round;
    let budget = cfg.budget.expect("validated");
    let steps = budget / (2 * k);
    let seed = cfg.master_seed;
    let x0 = start_point(cfg, p, seed);
    let eta_eps = match cfg.step.expect("validated") {
        StepSource::Absolute { eta_eps } => eta_eps,
        StepSource::Relative { r_eps } => {
            relative_eta_eps(p, p.domain(), &x0, r_eps, budget, StreamId::new(seed))?.0
        }
    };
    let damping = DampingParams::stochastic(k, budget, cfg.delta, l);
    let etas: Vec<f64> = (0..=(1u64 << k))
        .map(|j| eta_eps * 2f64.powi(j as i32))
        .collect();
    let f = good_event_frequency(
        p,
        p.domain(),
        &x0,
        p.x_star(),
        &etas,
        steps,
        &damping,
        cfg.paths,
        StreamId::new(seed),
    )?;
    let ci = clopper_pearson(f.held_all, f.paths, CONFIDENCE);
    let union = f.union_frequency();
    // Without noise the event holds on every path.
    let lines = if p.is_noiseless() {
        vec![check(
            "good_event_misses",
            (f.paths - f.held_all) as f64,
            0.0,
            true,
        )]
    } else {
        vec![check("good_event_union", 1.0 - cfg.delta, ci.1, false)]
    };
    let failures = count_failures(&lines);
    let mut summary = header(cfg);
    summary["round"] = json!(k);
    summary["steps"] = json!(steps);
    summary["alpha"] = json!(damping.alpha);
    summary["beta"] = json!(damping.beta);
    summary["etas"] = json!(etas);
    summary["paths"] = json!(f.paths);
    summary["held_per_eta"] = json!(f.held_per_eta);
    summary["held_all"] = json!(f.held_all);
    summary["frequency"] = json!(union);
    summary["ci"] = json!([ci.0, ci.1]);
    summary["checks"] = json!(lines);
    let diagnostics = etas
        .iter()
        .enumerate()
        .map(|(j, eta)| json!({ "exponent": j, "eta": eta, "held": f.held_per_eta[j], "frequency": f.frequency(j) }))
        .collect();
    Ok(Report {
        headline: format!(
            "validate-good-event: frequency {union} over {} paths ({:.0}% CI [{:.4}, {:.4}])",
            f.paths,
            CONFIDENCE * 100.0,
            ci.0,
            ci.1
        ),
        outputs: Outputs {
            rows: None,
            diagnostics,
            summary,
        },
        failures,
    })
}

fn boundary(cfg: &RunConfig) -> Report {
    let r = boundary_crossing_test(
        cfg.martingale,
        cfg.horizon,
        cfg.delta,
        cfg.paths,
        StreamId::new(cfg.master_seed),
        CONFIDENCE,
    );
    let lines = vec![check("boundary_crossing", r.ci.1, cfg.delta, false)];
    let mut summary = header(cfg);
    summary["report"] = json!(r);
    summary["checks"] = json!(lines);
    Report {
        headline: format!(
            "boundary-test: {}/{} paths crossed (frequency {}, {:.0}% CI [{:.4}, {:.4}]) at δ = {}",
            r.crossings,
            r.paths,
            r.frequency,
            CONFIDENCE * 100.0,
            r.ci.0,
            r.ci.1,
            cfg.delta
        ),
        outputs: Outputs {
            rows: None,
            diagnostics: vec![json!(r)],
            summary,
        },
        failures: 0,
    }
}
