//! Stochastic (sub)gradient oracles.

use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::linalg::Point;
use crate::rng::NoiseRng;

/// Known minimizer and minimum value of a validation-grade problem.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Optimum {
    pub x_star: Point,
    pub f_star: f64,
}

/// Source of stochastic subgradients `g = O(x)` with `E[g | x]` a subgradient of `f` at `x`.
///
/// `query` receives a generator already positioned for this draw; an
/// implementation must derive all of its randomness from it so that runs are
/// reproducible.
pub trait GradientOracle: Send + Sync {
    fn dimension(&self) -> usize;

    /// Almost-sure bound on `‖query(x)‖`, when one is known.
    fn norm_bound(&self) -> Option<f64>;

    fn query(&self, x: &[f64], rng: &mut NoiseRng, out: &mut [f64]);

    /// Exact subgradient side channel (the mean of `query`).
    fn exact_subgradient(&self, _x: &[f64]) -> Option<Point> {
        None
    }

    /// Exact objective value, for gap reporting.
    fn value(&self, _x: &[f64]) -> Option<f64> {
        None
    }

    fn optimum(&self) -> Option<&Optimum> {
        None
    }

    /// True when `query` always equals `exact_subgradient`.
    fn is_noiseless(&self) -> bool {
        false
    }
}

impl<O: GradientOracle + ?Sized> GradientOracle for &O {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn norm_bound(&self) -> Option<f64> {
        (**self).norm_bound()
    }
    fn query(&self, x: &[f64], rng: &mut NoiseRng, out: &mut [f64]) {
        (**self).query(x, rng, out)
    }
    fn exact_subgradient(&self, x: &[f64]) -> Option<Point> {
        (**self).exact_subgradient(x)
    }
    fn value(&self, x: &[f64]) -> Option<f64> {
        (**self).value(x)
    }
    fn optimum(&self) -> Option<&Optimum> {
        (**self).optimum()
    }
    fn is_noiseless(&self) -> bool {
        (**self).is_noiseless()
    }
}

impl<O: GradientOracle + ?Sized> GradientOracle for Box<O> {
    fn dimension(&self) -> usize {
        (**self).dimension()
    }
    fn norm_bound(&self) -> Option<f64> {
        (**self).norm_bound()
    }
    fn query(&self, x: &[f64], rng: &mut NoiseRng, out: &mut [f64]) {
        (**self).query(x, rng, out)
    }
    fn exact_subgradient(&self, x: &[f64]) -> Option<Point> {
        (**self).exact_subgradient(x)
    }
    fn value(&self, x: &[f64]) -> Option<f64> {
        (**self).value(x)
    }
    fn optimum(&self) -> Option<&Optimum> {
        (**self).optimum()
    }
    fn is_noiseless(&self) -> bool {
        (**self).is_noiseless()
    }
}

/// Wraps an oracle and counts every `query` call.
#[derive(Debug)]
pub struct CountingOracle<O> {
    inner: O,
    queries: AtomicU64,
}

impl<O> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        CountingOracle {
            inner,
            queries: AtomicU64::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.queries.load(Ordering::Relaxed)
    }

    pub fn reset(&self) {
        self.queries.store(0, Ordering::Relaxed);
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

impl<O: GradientOracle> GradientOracle for CountingOracle<O> {
    fn dimension(&self) -> usize {
        self.inner.dimension()
    }
    fn norm_bound(&self) -> Option<f64> {
        self.inner.norm_bound()
    }
    fn query(&self, x: &[f64], rng: &mut NoiseRng, out: &mut [f64]) {
        self.queries.fetch_add(1, Ordering::Relaxed);
        self.inner.query(x, rng, out)
    }
    fn exact_subgradient(&self, x: &[f64]) -> Option<Point> {
        self.inner.exact_subgradient(x)
    }
    fn value(&self, x: &[f64]) -> Option<f64> {
        self.inner.value(x)
    }
    fn optimum(&self) -> Option<&Optimum> {
        self.inner.optimum()
    }
    fn is_noiseless(&self) -> bool {
        self.inner.is_noiseless()
    }
}

/// Deterministic oracle built from a closure; handy for hand-checked examples.
pub struct FnOracle<F> {
    dim: usize,
    bound: Option<f64>,
    grad: F,
    optimum: Option<Optimum>,
}

impl<F> FnOracle<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    pub fn new(dim: usize, bound: Option<f64>, grad: F) -> Self {
        FnOracle {
            dim,
            bound,
            grad,
            optimum: None,
        }
    }

    pub fn with_optimum(mut self, optimum: Optimum) -> Self {
        self.optimum = Some(optimum);
        self
    }
}

impl<F> GradientOracle for FnOracle<F>
where
    F: Fn(&[f64], &mut [f64]) + Send + Sync,
{
    fn dimension(&self) -> usize {
        self.dim
    }
    fn norm_bound(&self) -> Option<f64> {
        self.bound
    }
    fn query(&self, x: &[f64], _rng: &mut NoiseRng, out: &mut [f64]) {
        (self.grad)(x, out)
    }
    fn exact_subgradient(&self, x: &[f64]) -> Option<Point> {
        let mut g = vec![0.0; self.dim];
        (self.grad)(x, &mut g);
        Some(g)
    }
    fn optimum(&self) -> Option<&Optimum> {
        self.optimum.as_ref()
    }
    fn is_noiseless(&self) -> bool {
        true
    }
}
