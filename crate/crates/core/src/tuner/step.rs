use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

/// A step size on the dyadic grid `base · 2^exponent`.
///
/// Candidates are compared and bisected through their integer exponents, so
/// geometric midpoints never drift off the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSizeExp {
    pub base: f64,
    pub exponent: u64,
}

impl StepSizeExp {
    pub fn new(base: f64, exponent: u64) -> Self {
        StepSizeExp { base, exponent }
    }

    /// `base · 2^exponent`; `+inf` once the product leaves the `f64` range.
    pub fn value(&self) -> f64 {
        scale_by_pow2(self.base, self.exponent)
    }

    pub fn with_exponent(&self, exponent: u64) -> Self {
        StepSizeExp {
            base: self.base,
            exponent,
        }
    }

    /// Geometric mean of two candidates whose exponent gap is even.
    pub fn geometric_midpoint(&self, other: &StepSizeExp) -> Option<StepSizeExp> {
        if self.base != other.base {
            return None;
        }
        let (lo, hi) = if self.exponent <= other.exponent {
            (self.exponent, other.exponent)
        } else {
            (other.exponent, self.exponent)
        };
        let gap = hi - lo;
        (gap % 2 == 0).then(|| self.with_exponent(lo + gap / 2))
    }
}

impl PartialOrd for StepSizeExp {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        if self.base == other.base {
            Some(self.exponent.cmp(&other.exponent))
        } else {
            self.value().partial_cmp(&other.value())
        }
    }
}

impl fmt::Display for StepSizeExp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}·2^{}", self.base, self.exponent)
    }
}

/// `x · 2^k` computed in chunks so that tiny bases with huge exponents stay exact.
pub(crate) fn scale_by_pow2(x: f64, k: u64) -> f64 {
    const CHUNK: u64 = 512;
    let chunk_factor = 2f64.powi(CHUNK as i32);
    let mut value = x;
    let mut remaining = k;
    while remaining >= CHUNK {
        value *= chunk_factor;
        remaining -= CHUNK;
        if !value.is_finite() || value == 0.0 {
            return value;
        }
    }
    value * 2f64.powi(remaining as i32)
}
