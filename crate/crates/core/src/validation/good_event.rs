//! The prefix-sum noise event under which the noiseless analysis survives.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::ValidationError;
use crate::domain::ProjectionDomain;
use crate::linalg::{dist, dot, norm_sq, sub};
use crate::oracle::GradientOracle;
use crate::rng::StreamId;
use crate::sgd::{sgd_run, SgdOptions, SgdTrace};
use crate::tuner::DampingParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodEventReport {
    pub eta: f64,
    pub alpha: f64,
    pub beta: f64,
    /// `m_t` for `t = 1..T`.
    pub margins: Vec<f64>,
    pub held: bool,
    /// `t` attaining the smallest margin.
    pub worst_t: u64,
}

/// `m_t = Σ_{i<t} ⟨Δ_i, x_i - x⋆⟩ + ¼ max{d̄_t, η√β} √(αG_t + β)` along a recorded trace.
pub fn good_event_margin<O: GradientOracle + ?Sized>(
    trace: &SgdTrace,
    oracle: &O,
    x_star: &[f64],
    damping: &DampingParams,
) -> Result<GoodEventReport, ValidationError> {
    let rec = trace.record().map_err(|_| ValidationError::MissingRecord)?;
    let (alpha, beta) = (damping.alpha, damping.beta);
    let eta = trace.eta;
    let floor = eta * beta.sqrt();
    let mut noise_sum = 0.0;
    let mut g_sum = 0.0;
    let mut d_bar = dist(&rec.iterates[0], x_star);
    let mut margins = Vec::with_capacity(rec.gradients.len());
    for (i, g) in rec.gradients.iter().enumerate() {
        let x = &rec.iterates[i];
        let exact = oracle
            .exact_subgradient(x)
            .ok_or(ValidationError::MissingSideChannel)?;
        let delta = sub(g, &exact);
        noise_sum += dot(&delta, &sub(x, x_star));
        g_sum += norm_sq(g);
        d_bar = d_bar.max(dist(&rec.iterates[i + 1], x_star));
        margins.push(noise_sum + 0.25 * d_bar.max(floor) * (alpha * g_sum + beta).sqrt());
    }
    let (worst, min) =
        margins.iter().enumerate().fold(
            (0, f64::INFINITY),
            |acc, (i, &m)| if m < acc.1 { (i, m) } else { acc },
        );
    Ok(GoodEventReport {
        eta,
        alpha,
        beta,
        held: min >= 0.0,
        worst_t: worst as u64 + 1,
        margins,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoodEventFrequency {
    pub paths: u64,
    /// Per step size, the number of paths on which the event held.
    pub held_per_eta: Vec<u64>,
    /// Paths on which the event held for every step size at once.
    pub held_all: u64,
}

impl GoodEventFrequency {
    pub fn union_frequency(&self) -> f64 {
        self.held_all as f64 / self.paths as f64
    }

    pub fn frequency(&self, index: usize) -> f64 {
        self.held_per_eta[index] as f64 / self.paths as f64
    }
}

/// Monte Carlo frequency of the good event over `n_paths` independent paths,
/// jointly for every step size in `etas`.
#[allow(clippy::too_many_arguments)]
pub fn good_event_frequency<O: GradientOracle + ?Sized>(
    oracle: &O,
    domain: &ProjectionDomain,
    x0: &[f64],
    x_star: &[f64],
    etas: &[f64],
    steps: u64,
    damping: &DampingParams,
    n_paths: u64,
    seed: StreamId,
) -> Result<GoodEventFrequency, ValidationError> {
    let options = SgdOptions {
        record_full: true,
        track_best: false,
    };
    let per_path: Vec<Vec<bool>> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            etas.iter()
                .enumerate()
                .map(|(j, &eta)| {
                    let trace = sgd_run(
                        oracle,
                        domain,
                        x0,
                        eta,
                        steps,
                        seed.derive(&[p, j as u64]),
                        options,
                    )?;
                    Ok(good_event_margin(&trace, oracle, x_star, damping)?.held)
                })
                .collect::<Result<Vec<bool>, ValidationError>>()
        })
        .collect::<Result<_, _>>()?;
    let mut held_per_eta = vec![0u64; etas.len()];
    let mut held_all = 0;
    for path in &per_path {
        for (c, &h) in held_per_eta.iter_mut().zip(path) {
            *c += h as u64;
        }
        held_all += path.iter().all(|&h| h) as u64;
    }
    Ok(GoodEventFrequency {
        paths: n_paths,
        held_per_eta,
        held_all,
    })
}
