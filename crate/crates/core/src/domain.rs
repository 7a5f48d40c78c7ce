//! Closed convex domains with Euclidean projection.

use serde::{Deserialize, Serialize};

use crate::linalg::{dist, Point};

/// Points this close to a ball's boundary count as inside, so projecting twice
/// is exactly idempotent despite rounding.
const BALL_SLACK: f64 = 1.0 + 4.0 * f64::EPSILON;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProjectionDomain {
    WholeSpace,
    Ball { center: Point, radius: f64 },
    Box { lower: Point, upper: Point },
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DomainError {
    #[error("ball radius must be finite and nonnegative, got {0}")]
    BadRadius(f64),
    #[error("box bounds have lengths {lower} and {upper}")]
    BoxLengthMismatch { lower: usize, upper: usize },
    #[error("box coordinate {index} has lower bound {lower} above upper bound {upper}")]
    EmptyBox {
        index: usize,
        lower: f64,
        upper: f64,
    },
}

impl ProjectionDomain {
    pub fn ball(center: Point, radius: f64) -> Result<Self, DomainError> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(DomainError::BadRadius(radius));
        }
        Ok(ProjectionDomain::Ball { center, radius })
    }

    pub fn boxed(lower: Point, upper: Point) -> Result<Self, DomainError> {
        if lower.len() != upper.len() {
            return Err(DomainError::BoxLengthMismatch {
                lower: lower.len(),
                upper: upper.len(),
            });
        }
        for (index, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if lo > hi || lo.is_nan() || hi.is_nan() {
                return Err(DomainError::EmptyBox {
                    index,
                    lower: lo,
                    upper: hi,
                });
            }
        }
        Ok(ProjectionDomain::Box { lower, upper })
    }

    /// Projects `x` onto the domain in place.
    pub fn project_in_place(&self, x: &mut [f64]) {
        match self {
            ProjectionDomain::WholeSpace => {}
            ProjectionDomain::Ball { center, radius } => {
                let d = dist(x, center);
                if d > radius * BALL_SLACK {
                    let s = radius / d;
                    for (xi, ci) in x.iter_mut().zip(center) {
                        *xi = ci + (*xi - ci) * s;
                    }
                }
            }
            ProjectionDomain::Box { lower, upper } => {
                for ((xi, lo), hi) in x.iter_mut().zip(lower).zip(upper) {
                    *xi = xi.clamp(*lo, *hi);
                }
            }
        }
    }

    pub fn project(&self, x: &[f64]) -> Point {
        let mut out = x.to_vec();
        self.project_in_place(&mut out);
        out
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        match self {
            ProjectionDomain::WholeSpace => true,
            ProjectionDomain::Ball { center, radius } => dist(x, center) <= radius * BALL_SLACK,
            ProjectionDomain::Box { lower, upper } => x
                .iter()
                .zip(lower)
                .zip(upper)
                .all(|((xi, lo), hi)| lo <= xi && xi <= hi),
        }
    }

    /// Largest distance between two points of the domain, if bounded.
    pub fn diameter(&self) -> Option<f64> {
        match self {
            ProjectionDomain::WholeSpace => None,
            ProjectionDomain::Ball { radius, .. } => Some(2.0 * radius),
            ProjectionDomain::Box { lower, upper } => Some(dist(lower, upper)),
        }
    }
}
