//! Fixed-step projected SGD and the trace statistics derived from one run.

use serde::{Deserialize, Serialize};

use crate::domain::ProjectionDomain;
use crate::linalg::{dist, norm_sq, CompensatedSum, Point, VectorSum};
use crate::oracle::GradientOracle;
use crate::rng::StreamId;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SgdError {
    #[error("step size must be finite and positive, got {0}")]
    InvalidStepSize(f64),
    #[error("step count must be at least 1")]
    ZeroSteps,
    #[error("start point has dimension {got}, oracle expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite {quantity} at step {step}")]
    NumericalFailure { step: u64, quantity: &'static str },
    #[error("trace was recorded without the full iterate record")]
    MissingRecord,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SgdOptions {
    /// Keep every iterate and gradient.
    pub record_full: bool,
    /// Track the iterate with the lowest exact objective (needs `oracle.value`).
    pub track_best: bool,
}

/// Iterates `x_0..=x_T` and gradients `g_0..g_{T-1}` of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub iterates: Vec<Point>,
    pub gradients: Vec<Point>,
}

/// Summary of a single SGD realization at a fixed step size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SgdTrace {
    pub eta: f64,
    pub steps: u64,
    pub x0: Point,
    /// Mean of `x_0, ..., x_{T-1}`.
    pub x_avg: Point,
    /// `max_{i <= T} ‖x_0 - x_i‖`.
    pub r_bar: f64,
    /// `Σ_{i<T} ‖g_i‖²`.
    pub grad_sq_sum: f64,
    pub g0_norm: f64,
    pub query_count: u64,
    pub record: Option<TraceRecord>,
    /// Lowest exact objective seen over `x_0..=x_T`.
    pub best_observed: Option<(Point, f64)>,
}

struct Accumulator {
    x0: Point,
    x_sum: VectorSum,
    r_bar: f64,
    grad_sq: CompensatedSum,
    count: u64,
}

impl Accumulator {
    fn new(x0: &[f64]) -> Self {
        Accumulator {
            x0: x0.to_vec(),
            x_sum: VectorSum::zeros(x0.len()),
            r_bar: 0.0,
            grad_sq: CompensatedSum::new(),
            count: 0,
        }
    }

    /// Records iterate `x_i` together with its gradient `g_i`.
    fn step(&mut self, x: &[f64], g: &[f64]) {
        self.x_sum.add(x);
        self.r_bar = self.r_bar.max(dist(&self.x0, x));
        self.grad_sq.add(norm_sq(g));
        self.count += 1;
    }

    fn last(&mut self, x_final: &[f64]) {
        self.r_bar = self.r_bar.max(dist(&self.x0, x_final));
    }
}

impl TraceRecord {
    /// Recomputes `(x_avg, r_bar, G)` from the record with the same accumulation
    /// order as [`sgd_run`], so the results are bit-identical.
    pub fn statistics(&self) -> (Point, f64, f64) {
        let x0 = &self.iterates[0];
        let mut acc = Accumulator::new(x0);
        for (x, g) in self.iterates.iter().zip(&self.gradients) {
            acc.step(x, g);
        }
        acc.last(self.iterates.last().expect("record holds x_T"));
        (acc.x_sum.mean(acc.count), acc.r_bar, acc.grad_sq.value())
    }
}

/// Distances of a recorded run to a reference point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceSeries {
    pub d0: f64,
    pub d_bar: f64,
    /// `d_t = ‖x_t - x_ref‖` for `t = 0..=T`.
    pub series: Vec<f64>,
}

impl SgdTrace {
    pub fn record(&self) -> Result<&TraceRecord, SgdError> {
        self.record.as_ref().ok_or(SgdError::MissingRecord)
    }

    /// Final iterate `x_T`, when recorded.
    pub fn x_final(&self) -> Option<&Point> {
        self.record.as_ref().and_then(|r| r.iterates.last())
    }
}

/// Runs `x_{i+1} = Π(x_i - η g_i)` with `g_i = O(x_i)` for `steps` iterations.
///
/// The `i`-th query draws its noise from `stream.draw(i)`, so the trace is a
/// pure function of `(oracle, domain, x0, eta, steps, stream)`.
pub fn sgd_run<O: GradientOracle + ?Sized>(
    oracle: &O,
    domain: &ProjectionDomain,
    x0: &[f64],
    eta: f64,
    steps: u64,
    stream: StreamId,
    options: SgdOptions,
) -> Result<SgdTrace, SgdError> {
    if !(eta.is_finite() && eta > 0.0) {
        return Err(SgdError::InvalidStepSize(eta));
    }
    if steps == 0 {
        return Err(SgdError::ZeroSteps);
    }
    let dim = oracle.dimension();
    if x0.len() != dim {
        return Err(SgdError::DimensionMismatch {
            expected: dim,
            got: x0.len(),
        });
    }
    let start = domain.project(x0);
    if start.iter().any(|v| !v.is_finite()) {
        return Err(SgdError::NumericalFailure {
            step: 0,
            quantity: "iterate",
        });
    }

    let mut acc = Accumulator::new(&start);
    let mut x = start.clone();
    let mut g = vec![0.0; dim];
    let mut noise = stream.source();
    let mut g0_norm = 0.0;
    let mut record = options.record_full.then(|| TraceRecord {
        iterates: Vec::with_capacity(steps as usize + 1),
        gradients: Vec::with_capacity(steps as usize),
    });
    let mut best = if options.track_best {
        oracle.value(&x).map(|v| (x.clone(), v))
    } else {
        None
    };

    for i in 0..steps {
        oracle.query(&x, noise.draw(i), &mut g);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(SgdError::NumericalFailure {
                step: i,
                quantity: "gradient",
            });
        }
        if i == 0 {
            g0_norm = norm_sq(&g).sqrt();
        }
        acc.step(&x, &g);
        if let Some(rec) = record.as_mut() {
            rec.iterates.push(x.clone());
            rec.gradients.push(g.clone());
        }
        for (xi, gi) in x.iter_mut().zip(&g) {
            *xi -= eta * gi;
        }
        domain.project_in_place(&mut x);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(SgdError::NumericalFailure {
                step: i + 1,
                quantity: "iterate",
            });
        }
        if let Some((bx, bv)) = best.as_mut() {
            if let Some(v) = oracle.value(&x) {
                if v < *bv {
                    *bv = v;
                    bx.clone_from(&x);
                }
            }
        }
    }
    acc.last(&x);
    if let Some(rec) = record.as_mut() {
        rec.iterates.push(x.clone());
    }

    Ok(SgdTrace {
        eta,
        steps,
        x_avg: acc.x_sum.mean(acc.count),
        r_bar: acc.r_bar,
        grad_sq_sum: acc.grad_sq.value(),
        g0_norm,
        query_count: steps,
        x0: start,
        record,
        best_observed: best,
    })
}

/// `d_0`, `d̄_T` and the per-step distances of a recorded run to `x_star`.
pub fn trace_distances(trace: &SgdTrace, x_star: &[f64]) -> Result<DistanceSeries, SgdError> {
    let rec = trace.record()?;
    let series: Vec<f64> = rec.iterates.iter().map(|x| dist(x, x_star)).collect();
    let d_bar = series.iter().copied().fold(0.0, f64::max);
    Ok(DistanceSeries {
        d0: series[0],
        d_bar,
        series,
    })
}
