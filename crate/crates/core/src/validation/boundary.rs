//! Time-uniform martingale boundary and a Monte Carlo crossing test.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::stats::clopper_pearson;
use crate::rng::StreamId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundaryParams {
    pub t: u64,
    pub delta: f64,
}

impl BoundaryParams {
    /// `A_t(δ) = log₂(60 log₂(6t) / δ)`.
    pub fn a_t(&self) -> f64 {
        boundary_log_term(self.t, self.delta)
    }
}

pub fn boundary_log_term(t: u64, delta: f64) -> f64 {
    (60.0 * (6.0 * t as f64).log2() / delta).log2()
}

/// `4 √(A_t(δ) · sum_sq + A_t(δ)²)`.
pub fn stitched_boundary(t: u64, delta: f64, sum_sq: f64) -> f64 {
    let a = boundary_log_term(t, delta);
    4.0 * (a * sum_sq + a * a).sqrt()
}

/// Increment processes with `|X_t| ≤ 1`; the predictable guess is `X̂ = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MartingaleSpec {
    Zero,
    /// `±1` with equal probability.
    FairCoin,
    /// `X ∈ {0, 1}` with `P(X = 1) = p`, recentered by `p` in the statistic.
    Bernoulli {
        p: f64,
    },
}

impl MartingaleSpec {
    fn mean(&self) -> f64 {
        match *self {
            MartingaleSpec::Bernoulli { p } => p,
            _ => 0.0,
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> f64 {
        match *self {
            MartingaleSpec::Zero => 0.0,
            MartingaleSpec::FairCoin => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            MartingaleSpec::Bernoulli { p } => {
                if rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub paths: u64,
    pub crossings: u64,
    pub frequency: f64,
    /// Clopper–Pearson interval at `confidence`.
    pub ci: (f64, f64),
    pub confidence: f64,
}

/// First time `|Σ (X_s - E X_s)|` reaches the boundary, if it does by `horizon`.
fn first_crossing(spec: &MartingaleSpec, horizon: u64, a: &[f64], stream: StreamId) -> Option<u64> {
    let mut rng = stream.draw(0);
    let mean = spec.mean();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for t in 1..=horizon {
        let x = spec.draw(&mut rng);
        sum += x - mean;
        sum_sq += x * x;
        let at = a[(t - 1) as usize];
        if sum.abs() >= 4.0 * (at * sum_sq + at * at).sqrt() {
            return Some(t);
        }
    }
    None
}

/// Fraction of `n_paths` paths whose centered sum ever meets the stitched
/// boundary within `horizon` steps.
pub fn boundary_crossing_test(
    spec: MartingaleSpec,
    horizon: u64,
    delta: f64,
    n_paths: u64,
    seed: StreamId,
    confidence: f64,
) -> CrossingReport {
    let a: Vec<f64> = (1..=horizon).map(|t| boundary_log_term(t, delta)).collect();
    let crossings = (0..n_paths)
        .into_par_iter()
        .map(|p| first_crossing(&spec, horizon, &a, seed.derive(&[p])).is_some() as u64)
        .sum::<u64>();
    CrossingReport {
        paths: n_paths,
        crossings,
        frequency: crossings as f64 / n_paths as f64,
        ci: clopper_pearson(crossings, n_paths, confidence),
        confidence,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_values() {
        assert_relative_eq!(boundary_log_term(100, 0.05), 13.43496, epsilon = 1e-5);
        assert_relative_eq!(
            stitched_boundary(100, 0.05, 100.0),
            156.1535,
            epsilon = 1e-3
        );
        let a = boundary_log_term(7, 0.3);
        assert_eq!(stitched_boundary(7, 0.3, 0.0), 4.0 * a);
    }

    #[test]
    fn boundary_is_monotone() {
        let mut prev = 0.0;
        for t in 1..200 {
            let b = stitched_boundary(t, 0.1, 5.0);
            assert!(b >= prev);
            prev = b;
        }
        assert!(stitched_boundary(50, 0.1, 10.0) <= stitched_boundary(50, 0.1, 11.0));
        assert!(boundary_log_term(50, 0.1) > boundary_log_term(50, 0.2));
    }

    #[test]
    fn zero_increments_never_cross() {
        let r =
            boundary_crossing_test(MartingaleSpec::Zero, 1000, 0.05, 50, StreamId::new(1), 0.99);
        assert_eq!(r.crossings, 0);
    }
}
