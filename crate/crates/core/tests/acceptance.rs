//! Acceptance harness: one line per criterion, nonzero exit if any gating
//! criterion fails. Runs as a plain binary so the lines always reach stdout.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use pfsgd::oracle::CountingOracle;
use pfsgd::problems::{
    grid_search_baseline, make_problem, CenterSpec, Family, NoiseModel, Problem, ProblemSpec,
    Spectrum,
};
use pfsgd::restart::{restart_tune, RestartPlan};
use pfsgd::tuner::{check_output_property, BisectionVariant, DampingParams};
use pfsgd::validation::{
    boundary_crossing_test, check_localization, check_theorem_bounds, clopper_pearson,
    good_event_frequency, linear_fit, loglog_fit, median, LocalizationTally, MartingaleSpec,
    SlopeFit, Verdict,
};
use pfsgd::{
    sgd_run, tune, ProjectionDomain, SgdOptions, StreamId, TuneConfig, TuneMode, TunerResult,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rayon::prelude::*;

struct Outcome {
    id: u32,
    name: &'static str,
    /// `None` marks an informational line.
    pass: Option<bool>,
    detail: String,
}

impl Outcome {
    fn gate(id: u32, name: &'static str, pass: bool, detail: String) -> Self {
        Outcome {
            id,
            name,
            pass: Some(pass),
            detail,
        }
    }
}

/// Output-property tallies gathered from every run in the matrix.
#[derive(Default)]
struct OutputTally {
    selected: u64,
    violations: u64,
}

impl OutputTally {
    fn absorb(&mut self, r: &TunerResult) {
        for round in &r.rounds {
            if let Some(rep) = check_output_property(&round.outcome, &round.damping) {
                self.selected += 1;
                self.violations += !rep.holds() as u64;
            }
        }
    }
}

fn ball(dim: usize, radius: f64) -> ProjectionDomain {
    ProjectionDomain::ball(vec![0.0; dim], radius).unwrap()
}

/// The five suite problems, optionally with a noise model chosen per family.
fn suite_specs(noisy: bool) -> Vec<(&'static str, ProblemSpec)> {
    let noise = |m: NoiseModel| if noisy { m } else { NoiseModel::None };
    vec![
        (
            "l1",
            ProblemSpec::new(Family::L1, 5)
                .with_center(CenterSpec::Random { scale: 1.0 })
                .with_noise(noise(NoiseModel::ClippedSphere { sigma: 0.5 })),
        ),
        (
            "quadratic",
            ProblemSpec::new(
                Family::Quadratic {
                    spectrum: Spectrum::Geometric {
                        top: 1.0,
                        ratio: 0.5,
                    },
                },
                8,
            )
            .with_domain(ball(8, 10.0))
            .with_noise(noise(NoiseModel::SignFlip { p: 0.2 })),
        ),
        (
            "huber",
            ProblemSpec::new(Family::Huber { width: 0.5 }, 5)
                .with_center(CenterSpec::Random { scale: 1.0 })
                .with_noise(noise(NoiseModel::ClippedSphere { sigma: 0.3 })),
        ),
        (
            "strongly-convex",
            ProblemSpec::new(
                Family::StronglyConvex {
                    mu: 1.0,
                    lipschitz: 1.0,
                },
                3,
            )
            .with_noise(noise(NoiseModel::SlackSphere { fraction: 0.5 })),
        ),
        (
            "logistic",
            ProblemSpec::new(
                Family::Logistic {
                    samples: 64,
                    lambda: 0.01,
                    label_flip: 0.1,
                },
                4,
            )
            .with_domain(ball(4, 10.0))
            .with_noise(noise(NoiseModel::SignFlip { p: 0.1 })),
        ),
    ]
}

fn suite(noisy: bool) -> Vec<(&'static str, Problem)> {
    suite_specs(noisy)
        .into_iter()
        .map(|(n, s)| (n, make_problem(&s, 7).unwrap()))
        .collect()
}

fn log_uniform(rng: &mut StdRng, lo: f64, hi: f64) -> f64 {
    2f64.powf(rng.random_range(lo.log2()..hi.log2()))
}

fn secs(d: Duration) -> String {
    format!("{:.1}s", d.as_secs_f64())
}

/// A checked run: result, failing lines, inconclusive count, localization tally.
type SuiteRun = (TunerResult, Vec<String>, u64, LocalizationTally);

struct Config {
    problem: usize,
    mode: TuneMode,
    budget: u64,
    eta_eps: f64,
    dist: f64,
    seed: u64,
}

fn random_config(rng: &mut StdRng, problems: &[(&str, Problem)], seed: u64) -> Config {
    let problem = rng.random_range(0..problems.len());
    let l = problems[problem].1.lipschitz().unwrap();
    let delta = log_uniform(rng, 0.01, 0.5);
    let mode = match rng.random_range(0..3) {
        0 => TuneMode::Deterministic,
        1 => TuneMode::Stochastic {
            delta,
            lipschitz: l,
        },
        _ => TuneMode::NonAdaptive {
            delta,
            lipschitz: l,
        },
    };
    Config {
        problem,
        mode,
        budget: log_uniform(rng, 16.0, 16384.0).round() as u64,
        eta_eps: log_uniform(rng, 1e-6, 1.0),
        dist: log_uniform(rng, 1e-2, 10.0),
        seed,
    }
}

fn run_config(
    problems: &[(&str, Problem)],
    c: &Config,
    record: bool,
) -> Result<(TunerResult, u64), String> {
    let p = &problems[c.problem].1;
    let counted = CountingOracle::new(p);
    let x0 = p.start_at_distance(c.dist, StreamId::new(c.seed).derive(&[1]));
    let cfg =
        TuneConfig::new(c.budget, c.eta_eps, c.mode, StreamId::new(c.seed)).record_full(record);
    let r = tune(&counted, p.domain(), &x0, &cfg)
        .map_err(|e| format!("{}: {e}", problems[c.problem].0))?;
    Ok((r, counted.count()))
}

fn budget_and_structure(tally: &mut OutputTally) -> Outcome {
    let start = Instant::now();
    let mut problems = suite(false);
    problems.extend(suite(true));
    let mut rng = StdRng::seed_from_u64(0x5eed_0001);
    let configs: Vec<Config> = (0..600)
        .map(|s| random_config(&mut rng, &problems, s))
        .collect();
    let results: Vec<Result<(TunerResult, u64), String>> = configs
        .par_iter()
        .map(|c| run_config(&problems, c, false))
        .collect();
    let mut over = 0;
    let mut errors = Vec::new();
    let mut selected = 0;
    let mut bad_midpoints = 0;
    for (c, res) in configs.iter().zip(&results) {
        match res {
            Ok((r, count)) => {
                over += (*count > c.budget || r.total_queries != *count) as u64;
                for round in &r.rounds {
                    if matches!(round.outcome.variant, BisectionVariant::Selected { .. }) {
                        selected += 1;
                        bad_midpoints +=
                            (round.outcome.midpoint_evaluations as u64 != round.k) as u64;
                    }
                }
                tally.absorb(r);
            }
            Err(e) => errors.push(e.clone()),
        }
    }
    let elapsed = start.elapsed();
    let pass =
        over == 0 && errors.is_empty() && bad_midpoints == 0 && elapsed < Duration::from_secs(60);
    let mut detail = format!(
        "{} runs, {over} over budget, {} errors, {bad_midpoints}/{selected} Selected rounds with wrong midpoint count, {}",
        configs.len(),
        errors.len(),
        secs(elapsed)
    );
    if let Some(e) = errors.first() {
        detail.push_str(&format!(", first error: {e}"));
    }
    Outcome::gate(1, "budget and structure", pass, detail)
}

fn hand_table() -> Outcome {
    let p = make_problem(&ProblemSpec::new(Family::L1, 1), 0).unwrap();
    // (η, T, G, r̄, x_avg), simulated by hand from x0 = 1
    let table: [(f64, u64, f64, f64, f64); 10] = [
        (0.0625, 4, 4.0, 0.25, 0.90625),
        (0.0625, 16, 16.0, 1.0, 0.53125),
        (0.25, 4, 4.0, 1.0, 0.625),
        (0.25, 16, 4.0, 1.0, 0.15625),
        (0.5, 4, 2.0, 1.0, 0.375),
        (0.5, 16, 2.0, 1.0, 0.09375),
        (1.0, 4, 1.0, 1.0, 0.25),
        (1.0, 16, 1.0, 1.0, 0.0625),
        (2.0, 4, 4.0, 2.0, 0.0),
        (2.0, 16, 16.0, 2.0, 0.0),
    ];
    let mut mismatches = Vec::new();
    for (eta, t, g, r, avg) in table {
        let tr = sgd_run(
            &p,
            p.domain(),
            &[1.0],
            eta,
            t,
            StreamId::new(0),
            SgdOptions::default(),
        )
        .unwrap();
        if (tr.grad_sq_sum, tr.r_bar, tr.x_avg[0]) != (g, r, avg) {
            mismatches.push(format!(
                "η={eta} T={t}: ({}, {}, {})",
                tr.grad_sq_sum, tr.r_bar, tr.x_avg[0]
            ));
        }
    }
    let counted = CountingOracle::new(&p);
    let cfg = TuneConfig::new(64, 1.0 / 16.0, TuneMode::Deterministic, StreamId::new(0));
    let r = tune(&counted, p.domain(), &[1.0], &cfg).unwrap();
    let gap = p.gap(&r.x_bar);
    let run_ok =
        r.eta.value() == 0.25 && gap == 0.15625 && r.total_queries == 64 && counted.count() == 64;
    let pass = mismatches.is_empty() && run_ok;
    Outcome::gate(
        2,
        "hand-simulated |x| table",
        pass,
        format!(
            "{}/10 table rows exact, B=64 run: η_o={}, gap={gap}, queries={} (counted {}){}",
            10 - mismatches.len(),
            r.eta.value(),
            r.total_queries,
            counted.count(),
            mismatches
                .first()
                .map(|m| format!(", mismatch {m}"))
                .unwrap_or_default()
        ),
    )
}

fn deterministic_suite(tally: &mut OutputTally, traces: &mut LocalizationTally) -> Outcome {
    let start = Instant::now();
    let problems = suite(false);
    let jobs: Vec<(usize, u64)> = (0..problems.len())
        .flat_map(|i| (0..100).map(move |s| (i, s)))
        .collect();
    let found: Vec<Result<SuiteRun, String>> = jobs
        .par_iter()
        .map(|&(i, s)| {
            let mut rng = StdRng::seed_from_u64(0xd00d ^ (i as u64) << 32 ^ s);
            let c = Config {
                problem: i,
                mode: TuneMode::Deterministic,
                budget: log_uniform(&mut rng, 64.0, 4096.0).round() as u64,
                eta_eps: log_uniform(&mut rng, 1e-5, 1e-1),
                dist: log_uniform(&mut rng, 0.1, 10.0),
                seed: 10_000 + s,
            };
            let (r, count) = run_config(&problems, &c, true)?;
            let rep =
                check_theorem_bounds(&r, &problems[i].1, Some(count)).map_err(|e| e.to_string())?;
            let fails = rep
                .failures()
                .map(|l| format!("{}: {l}", problems[i].0))
                .collect();
            let inconclusive = rep
                .lines
                .iter()
                .filter(|l| l.verdict == Verdict::Inconclusive)
                .count() as u64;
            let loc = check_localization(
                r.trace_cache.values().map(|t| t.as_ref()),
                problems[i].1.x_star(),
            )
            .map_err(|e| e.to_string())?;
            Ok((r, fails, inconclusive, loc))
        })
        .collect();
    let mut fails = Vec::new();
    let mut errors = Vec::new();
    let mut inconclusive = 0;
    for f in found {
        match f {
            Ok((r, fl, inc, loc)) => {
                tally.absorb(&r);
                traces.merge(&loc);
                fails.extend(fl);
                inconclusive += inc;
            }
            Err(e) => errors.push(e),
        }
    }
    let pass = fails.is_empty() && errors.is_empty();
    let mut detail = format!(
        "{} runs, {} failing lines, {} errors, {inconclusive} inconclusive lines, {}",
        jobs.len(),
        fails.len(),
        errors.len(),
        secs(start.elapsed())
    );
    if let Some(f) = fails.first().or(errors.first()) {
        detail.push_str(&format!(", first: {f}"));
    }
    Outcome::gate(3, "deterministic theorem suite", pass, detail)
}

fn localization(mut traces: LocalizationTally) -> Outcome {
    let start = Instant::now();
    let problems = suite(false);
    let mut batch = 0u64;
    let mut errors = 0u64;
    while traces.eligible < 10_000 && batch < 40 {
        let tallies: Vec<Option<LocalizationTally>> = (0..500u64)
            .into_par_iter()
            .map(|s| {
                let seed = 1_000_000 + batch * 500 + s;
                let mut rng = StdRng::seed_from_u64(seed);
                let c = Config {
                    problem: rng.random_range(0..problems.len()),
                    mode: TuneMode::Deterministic,
                    budget: log_uniform(&mut rng, 32.0, 1024.0).round() as u64,
                    eta_eps: log_uniform(&mut rng, 1e-4, 1.0),
                    dist: log_uniform(&mut rng, 0.1, 10.0),
                    seed,
                };
                let (r, _) = run_config(&problems, &c, true).ok()?;
                check_localization(
                    r.trace_cache.values().map(|t| t.as_ref()),
                    problems[c.problem].1.x_star(),
                )
                .ok()
            })
            .collect();
        for t in tallies {
            match t {
                Some(t) => traces.merge(&t),
                None => errors += 1,
            }
        }
        batch += 1;
    }
    let pass = traces.eligible >= 10_000 && traces.violations == 0 && errors == 0;
    Outcome::gate(
        4,
        "localization",
        pass,
        format!(
            "{} eligible traces, {} violations, worst d̄/d0={:.4} (≤ 2), worst r̄/d0={:.4} (≤ 3), {errors} errors, {}",
            traces.eligible,
            traces.violations,
            traces.worst_d_bar,
            traces.worst_r_bar,
            secs(start.elapsed())
        ),
    )
}

fn output_property(tally: &OutputTally) -> Outcome {
    Outcome::gate(
        5,
        "output property",
        tally.selected > 0 && tally.violations == 0,
        format!(
            "{} Selected outcomes, {} violations",
            tally.selected, tally.violations
        ),
    )
}

fn good_event() -> Outcome {
    let start = Instant::now();
    let spec = ProblemSpec::new(Family::L1, 5).with_noise(NoiseModel::ClippedSphere { sigma: 1.0 });
    let p = make_problem(&spec, 0).unwrap();
    let l = p.lipschitz().unwrap();
    let (k, budget, delta) = (2u64, 2048u64, 0.1);
    let steps = budget / (2 * k);
    let damping = DampingParams::stochastic(k, budget, delta, l);
    let x0 = p.start_at_distance(1.0, StreamId::new(6));
    let eta_eps = 1.0 / (4.0 * l * (steps as f64).sqrt());
    let etas: Vec<f64> = (0..=(1u64 << k))
        .map(|j| eta_eps * 2f64.powi(j as i32))
        .collect();
    let f = good_event_frequency(
        &p,
        p.domain(),
        &x0,
        p.x_star(),
        &etas,
        steps,
        &damping,
        1000,
        StreamId::new(66),
    )
    .unwrap();
    let (lo, _) = clopper_pearson(f.held_all, f.paths, 0.99);
    let pass = lo >= 0.9 && start.elapsed() < Duration::from_secs(300);
    Outcome::gate(
        6,
        "good event",
        pass,
        format!(
            "T={steps}, α={:.1}, β={:.1}, union frequency {}/{} (99% CP lower {lo:.4} ≥ 0.9), per-η {:?}, {}",
            damping.alpha,
            damping.beta,
            f.held_all,
            f.paths,
            f.held_per_eta,
            secs(start.elapsed())
        ),
    )
}

fn boundary() -> Outcome {
    let start = Instant::now();
    let mut parts = Vec::new();
    let mut pass = true;
    for (i, delta) in [0.05, 0.2].into_iter().enumerate() {
        let r = boundary_crossing_test(
            MartingaleSpec::FairCoin,
            10_000,
            delta,
            10_000,
            StreamId::new(70 + i as u64),
            0.99,
        );
        pass &= r.ci.1 <= delta;
        parts.push(format!(
            "δ={delta}: {}/{} crossings, 99% CP upper {:.4}",
            r.crossings, r.paths, r.ci.1
        ));
    }
    Outcome::gate(
        7,
        "boundary crossing",
        pass,
        format!("{}, {}", parts.join("; "), secs(start.elapsed())),
    )
}

fn budgets() -> Vec<u64> {
    (10..=16).map(|e| 1u64 << e).collect()
}

/// Median final gap over `reps` random starts at distance 1, per budget.
fn median_gaps(p: &Problem, eta_eps: f64, reps: u64, seed: u64) -> Result<Vec<f64>, String> {
    budgets()
        .iter()
        .map(|&b| {
            let gaps: Result<Vec<f64>, String> = (0..reps)
                .into_par_iter()
                .map(|s| {
                    let x0 = p.start_at_distance(1.0, StreamId::new(seed + s));
                    let cfg = TuneConfig::new(
                        b,
                        eta_eps,
                        TuneMode::Deterministic,
                        StreamId::new(seed + s),
                    );
                    let r = tune(p, p.domain(), &x0, &cfg).map_err(|e| e.to_string())?;
                    Ok(p.gap(&r.x_bar))
                })
                .collect();
            Ok(median(&gaps?))
        })
        .collect()
}

fn slope_line(
    id: u32,
    name: &'static str,
    fit: Result<SlopeFit, String>,
    range: (f64, f64),
    start: Instant,
    extra: bool,
) -> Outcome {
    match fit {
        Ok(f) => Outcome::gate(
            id,
            name,
            extra && f.slope >= range.0 && f.slope <= range.1,
            format!(
                "slope {:.3} (95% CI [{:.3}, {:.3}]) in [{}, {}], {}",
                f.slope,
                f.ci.0,
                f.ci.1,
                range.0,
                range.1,
                secs(start.elapsed())
            ),
        ),
        Err(e) => Outcome::gate(id, name, false, format!("error: {e}")),
    }
}

fn smooth_rate() -> Outcome {
    let start = Instant::now();
    let spec = ProblemSpec::new(
        Family::Quadratic {
            spectrum: Spectrum::Geometric {
                top: 1.0,
                ratio: 0.5,
            },
        },
        20,
    )
    .with_domain(ball(20, 10.0));
    let p = make_problem(&spec, 0).unwrap();
    let xs: Vec<f64> = budgets().iter().map(|&b| b as f64).collect();
    let fit = median_gaps(&p, 0.25, 20, 800)
        .and_then(|ys| loglog_fit(&xs, &ys, 0.95).ok_or_else(|| "non-positive gap".to_string()));
    let in_time = start.elapsed() < Duration::from_secs(120);
    slope_line(8, "smoothness rate", fit, (-1.2, -0.8), start, in_time)
}

fn nonsmooth_rate() -> Outcome {
    let start = Instant::now();
    let spec = ProblemSpec::new(Family::L1, 5).with_center(CenterSpec::Random { scale: 1.0 });
    let p = make_problem(&spec, 9).unwrap();
    let xs: Vec<f64> = budgets().iter().map(|&b| b as f64).collect();
    let fit = median_gaps(&p, 1e-3, 20, 900)
        .and_then(|ys| loglog_fit(&xs, &ys, 0.95).ok_or_else(|| "non-positive gap".to_string()));
    slope_line(9, "nonsmooth rate", fit, (-0.7, -0.3), start, true)
}

fn strong_convexity() -> Outcome {
    let start = Instant::now();
    let spec = ProblemSpec::new(
        Family::StronglyConvex {
            mu: 1.0,
            lipschitz: 1.0,
        },
        2,
    )
    .with_noise(NoiseModel::SlackSphere { fraction: 0.5 });
    let p = make_problem(&spec, 0).unwrap();
    let ms: Vec<u32> = (8..=14).collect();
    let mut over = 0;
    let meds: Result<Vec<f64>, String> = ms
        .iter()
        .map(|&m| {
            let plan = RestartPlan::new(m, 8.0, 0.1, 1.0);
            let runs: Result<Vec<(f64, u64)>, String> = (0..100u64)
                .into_par_iter()
                .map(|s| {
                    let x0 = p.start_at_distance(1.0, StreamId::new(s));
                    let r = restart_tune(&p, p.domain(), &x0, &plan, StreamId::new(10_000 + s))
                        .map_err(|e| e.to_string())?;
                    Ok((p.gap(&r.x_final), r.total_queries))
                })
                .collect();
            let runs = runs?;
            over += runs.iter().filter(|r| r.1 > 1u64 << (m + 1)).count();
            Ok(median(&runs.iter().map(|r| r.0).collect::<Vec<_>>()))
        })
        .collect();
    let fit = meds.and_then(|meds| {
        let xs: Vec<f64> = ms.iter().map(|&m| m as f64).collect();
        let ys: Vec<f64> = meds.iter().map(|g| g.log2()).collect();
        linear_fit(&xs, &ys, 0.95).ok_or_else(|| "degenerate fit".to_string())
    });
    let ok = over == 0 && start.elapsed() < Duration::from_secs(600);
    let mut line = slope_line(
        10,
        "strong convexity restarts",
        fit,
        (-1.3, -0.7),
        start,
        ok,
    );
    line.detail
        .push_str(&format!(", {over} chains over 2^(M+1) queries"));
    line
}

fn baseline() -> Outcome {
    let start = Instant::now();
    let budget = 4096;
    let grid: Vec<f64> = (-10..=2).map(|e| 2f64.powi(e)).collect();
    let mut parts = Vec::new();
    let mut within = true;
    for (name, p) in suite(false) {
        let rows: Vec<(f64, Vec<f64>)> = (0..20u64)
            .into_par_iter()
            .map(|s| {
                let x0 = p.start_at_distance(1.0, StreamId::new(s));
                let cfg = TuneConfig::new(budget, 1e-3, TuneMode::Deterministic, StreamId::new(s));
                let tuned = tune(&p, p.domain(), &x0, &cfg)
                    .map(|r| p.gap(&r.x_bar))
                    .unwrap_or(f64::NAN);
                let grid_gaps = grid_search_baseline(&p, &x0, budget, &grid, StreamId::new(s))
                    .map(|c| c.iter().map(|c| c.gap).collect())
                    .unwrap_or_else(|_| vec![f64::NAN; grid.len()]);
                (tuned, grid_gaps)
            })
            .collect();
        let tuned = median(&rows.iter().map(|r| r.0).collect::<Vec<_>>());
        let best = (0..grid.len())
            .map(|j| median(&rows.iter().map(|r| r.1[j]).collect::<Vec<_>>()))
            .fold(f64::INFINITY, f64::min);
        let ok = tuned <= 10.0 * best || tuned <= 1e-12;
        within &= ok;
        parts.push(format!(
            "{name} {tuned:.2e} vs {best:.2e}{}",
            if ok { "" } else { " (outside 10x)" }
        ));
    }
    Outcome {
        id: 11,
        name: "baseline sanity",
        pass: None,
        detail: format!(
            "{}: {}, {}",
            if within {
                "all within 10x"
            } else {
                "some outside 10x"
            },
            parts.join("; "),
            secs(start.elapsed())
        ),
    }
}

fn main() -> ExitCode {
    // `cargo test` forwards harness flags such as `--list`; there is nothing to list.
    if std::env::args().any(|a| a == "--list") {
        return ExitCode::SUCCESS;
    }
    let mut tally = OutputTally::default();
    let mut traces = LocalizationTally::default();
    let mut out = vec![budget_and_structure(&mut tally), hand_table()];
    out.push(deterministic_suite(&mut tally, &mut traces));
    out.push(localization(traces));
    out.push(output_property(&tally));
    out.push(good_event());
    out.push(boundary());
    out.push(smooth_rate());
    out.push(nonsmooth_rate());
    out.push(strong_convexity());
    out.push(baseline());
    out.sort_by_key(|o| o.id);
    let mut failed = false;
    for o in &out {
        let tag = match o.pass {
            Some(true) => "PASS",
            Some(false) => {
                failed = true;
                "FAIL"
            }
            None => "INFO",
        };
        println!("criterion {:>2} {tag} {}: {}", o.id, o.name, o.detail);
    }
    if failed {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
