//! Synthetic convex problems with known optima and bounded noise.

mod baseline;
mod logistic;
mod noise;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

pub use baseline::{grid_search_baseline, GridCandidate};
pub use logistic::LogisticData;
pub use noise::NoiseModel;

use crate::domain::ProjectionDomain;
use crate::linalg::{dist, norm, Point};
use crate::oracle::{GradientOracle, Optimum};
use crate::rng::{NoiseRng, StreamId};

/// Slack applied to the declared bound so rounding in noisy samples never exceeds it.
const BOUND_SLACK: f64 = 1.0 + 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Spectrum {
    /// Every coordinate has curvature `s`.
    Isotropic { s: f64 },
    /// Coordinate `j` has curvature `top · ratio^j`.
    Geometric { top: f64, ratio: f64 },
}

impl Spectrum {
    fn curvatures(&self, dim: usize) -> Vec<f64> {
        match *self {
            Spectrum::Isotropic { s } => vec![s; dim],
            Spectrum::Geometric { top, ratio } => {
                (0..dim).map(|j| top * ratio.powi(j as i32)).collect()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    /// `Σ |x_j - c_j|` with sign subgradients (0 at kinks).
    L1,
    /// `½ Σ s_j (x_j - c_j)²`.
    Quadratic { spectrum: Spectrum },
    /// `Σ h(x_j - c_j)` with `h' = clamp(u, -w, w)`.
    Huber { width: f64 },
    /// `(μ/2)‖x‖²` on the ball of radius `L/μ` around 0.
    StronglyConvex { mu: f64, lipschitz: f64 },
    /// Regularized logistic loss over `samples` synthetic points.
    Logistic {
        samples: usize,
        lambda: f64,
        #[serde(default)]
        label_flip: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum CenterSpec {
    #[default]
    Zero,
    Explicit {
        values: Point,
    },
    /// Standard normal coordinates times `scale`, drawn from the problem seed.
    Random {
        scale: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemSpec {
    #[serde(flatten)]
    pub family: Family,
    pub dimension: usize,
    #[serde(default)]
    pub center: CenterSpec,
    #[serde(default)]
    pub noise: NoiseModel,
    #[serde(default = "whole_space")]
    pub domain: ProjectionDomain,
    /// Declared gradient bound; must dominate the computed one.
    #[serde(default)]
    pub gradient_bound: Option<f64>,
}

fn whole_space() -> ProjectionDomain {
    ProjectionDomain::WholeSpace
}

impl ProblemSpec {
    pub fn new(family: Family, dimension: usize) -> Self {
        ProblemSpec {
            family,
            dimension,
            center: CenterSpec::Zero,
            noise: NoiseModel::None,
            domain: ProjectionDomain::WholeSpace,
            gradient_bound: None,
        }
    }

    pub fn with_center(mut self, center: CenterSpec) -> Self {
        self.center = center;
        self
    }

    pub fn with_noise(mut self, noise: NoiseModel) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_domain(mut self, domain: ProjectionDomain) -> Self {
        self.domain = domain;
        self
    }

    pub fn with_gradient_bound(mut self, l: f64) -> Self {
        self.gradient_bound = Some(l);
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ProblemError {
    #[error("dimension must be positive")]
    ZeroDimension,
    #[error("{field} must have length {expected}, got {got}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid parameter {name}: {reason}")]
    BadParameter { name: &'static str, reason: String },
    #[error("invalid noise model: {0}")]
    BadNoise(String),
    #[error("minimizer lies outside the domain")]
    OptimumOutsideDomain,
    #[error("declared L = {declared} is below the attainable gradient norm {needed}")]
    UnattainableBound { declared: f64, needed: f64 },
    #[error("noise needs a bounded gradient, but the domain is unbounded")]
    UnboundedNoise,
    #[error("logistic solve did not converge")]
    SolveFailed,
}

#[derive(Debug, Clone)]
enum Objective {
    L1 { center: Point },
    Quadratic { center: Point, curv: Vec<f64> },
    Huber { center: Point, width: f64 },
    StronglyConvex { mu: f64 },
    Logistic(LogisticData),
}

impl Objective {
    fn gradient(&self, x: &[f64], out: &mut [f64]) {
        match self {
            Objective::L1 { center } => {
                for ((o, xi), ci) in out.iter_mut().zip(x).zip(center) {
                    let u = xi - ci;
                    *o = if u > 0.0 {
                        1.0
                    } else if u < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                }
            }
            Objective::Quadratic { center, curv } => {
                for (((o, xi), ci), s) in out.iter_mut().zip(x).zip(center).zip(curv) {
                    *o = s * (xi - ci);
                }
            }
            Objective::Huber { center, width } => {
                for ((o, xi), ci) in out.iter_mut().zip(x).zip(center) {
                    *o = (xi - ci).clamp(-width, *width);
                }
            }
            Objective::StronglyConvex { mu } => {
                for (o, xi) in out.iter_mut().zip(x) {
                    *o = mu * xi;
                }
            }
            Objective::Logistic(data) => data.gradient(x, out),
        }
    }

    fn value(&self, x: &[f64]) -> f64 {
        match self {
            Objective::L1 { center } => x.iter().zip(center).map(|(a, c)| (a - c).abs()).sum(),
            Objective::Quadratic { center, curv } => {
                0.5 * x
                    .iter()
                    .zip(center)
                    .zip(curv)
                    .map(|((a, c), s)| s * (a - c) * (a - c))
                    .sum::<f64>()
            }
            Objective::Huber { center, width } => x
                .iter()
                .zip(center)
                .map(|(a, c)| {
                    let u = (a - c).abs();
                    if u <= *width {
                        0.5 * u * u
                    } else {
                        width * u - 0.5 * width * width
                    }
                })
                .sum(),
            Objective::StronglyConvex { mu } => 0.5 * mu * x.iter().map(|v| v * v).sum::<f64>(),
            Objective::Logistic(data) => data.value(x),
        }
    }
}

/// A ready-to-query problem instance.
#[derive(Debug, Clone)]
pub struct Problem {
    spec: ProblemSpec,
    objective: Objective,
    domain: ProjectionDomain,
    optimum: Optimum,
    sup_grad: Option<f64>,
    lipschitz: Option<f64>,
    smoothness: Option<f64>,
    strong_convexity: Option<f64>,
}

impl Problem {
    pub fn spec(&self) -> &ProblemSpec {
        &self.spec
    }

    pub fn domain(&self) -> &ProjectionDomain {
        &self.domain
    }

    pub fn x_star(&self) -> &[f64] {
        &self.optimum.x_star
    }

    pub fn f_star(&self) -> f64 {
        self.optimum.f_star
    }

    /// `sup ‖∇f‖` over the domain, before noise.
    pub fn sup_gradient(&self) -> Option<f64> {
        self.sup_grad
    }

    pub fn lipschitz(&self) -> Option<f64> {
        self.lipschitz
    }

    pub fn smoothness(&self) -> Option<f64> {
        self.smoothness
    }

    pub fn strong_convexity(&self) -> Option<f64> {
        self.strong_convexity
    }

    pub fn gap(&self, x: &[f64]) -> f64 {
        self.objective.value(x) - self.optimum.f_star
    }

    /// A start point at distance `distance` from `x⋆` in a seeded random
    /// direction, projected onto the domain.
    pub fn start_at_distance(&self, distance: f64, seed: StreamId) -> Point {
        let mut rng = seed.derive(&[0x5354]).draw(0);
        let mut u: Point = (0..self.spec.dimension)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        let n = norm(&u).max(f64::MIN_POSITIVE);
        for (ui, xs) in u.iter_mut().zip(&self.optimum.x_star) {
            *ui = xs + distance * *ui / n;
        }
        self.domain.project(&u)
    }
}

impl GradientOracle for Problem {
    fn dimension(&self) -> usize {
        self.spec.dimension
    }

    fn norm_bound(&self) -> Option<f64> {
        self.lipschitz
    }

    fn query(&self, x: &[f64], rng: &mut NoiseRng, out: &mut [f64]) {
        self.objective.gradient(x, out);
        self.spec.noise.apply(out, self.lipschitz, rng);
    }

    fn exact_subgradient(&self, x: &[f64]) -> Option<Point> {
        let mut g = vec![0.0; self.spec.dimension];
        self.objective.gradient(x, &mut g);
        Some(g)
    }

    fn value(&self, x: &[f64]) -> Option<f64> {
        Some(self.objective.value(x))
    }

    fn optimum(&self) -> Option<&Optimum> {
        Some(&self.optimum)
    }

    fn is_noiseless(&self) -> bool {
        self.spec.noise.is_noiseless()
    }
}

fn positive(name: &'static str, v: f64) -> Result<(), ProblemError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ProblemError::BadParameter {
            name,
            reason: format!("must be finite and positive, got {v}"),
        })
    }
}

/// Largest `‖x - c‖` over the domain, per coordinate when weighted by `w`.
fn weighted_reach(domain: &ProjectionDomain, c: &[f64], w: &[f64]) -> Option<f64> {
    match domain {
        ProjectionDomain::WholeSpace => None,
        ProjectionDomain::Ball { center, radius } => {
            let wmax = w.iter().cloned().fold(0.0, f64::max);
            Some(wmax * (radius + dist(center, c)))
        }
        ProjectionDomain::Box { lower, upper } => {
            let mut s = 0.0;
            for (((lo, hi), ci), wi) in lower.iter().zip(upper).zip(c).zip(w) {
                let r = (ci - lo).abs().max((hi - ci).abs());
                s += (wi * r) * (wi * r);
            }
            s.is_finite().then(|| s.sqrt())
        }
    }
}

fn check_domain(domain: &ProjectionDomain, dim: usize) -> Result<(), ProblemError> {
    let (field, len) = match domain {
        ProjectionDomain::WholeSpace => return Ok(()),
        ProjectionDomain::Ball { center, .. } => ("domain.center", center.len()),
        ProjectionDomain::Box { lower, .. } => ("domain.lower", lower.len()),
    };
    if len != dim {
        return Err(ProblemError::LengthMismatch {
            field,
            expected: dim,
            got: len,
        });
    }
    Ok(())
}

/// Builds the oracle, domain and optimum for `spec`. `seed` drives random
/// centers and logistic data.
pub fn make_problem(spec: &ProblemSpec, seed: u64) -> Result<Problem, ProblemError> {
    let dim = spec.dimension;
    if dim == 0 {
        return Err(ProblemError::ZeroDimension);
    }
    spec.noise.validate().map_err(ProblemError::BadNoise)?;
    check_domain(&spec.domain, dim)?;
    let root = StreamId::new(seed);

    let center = match &spec.center {
        CenterSpec::Zero => vec![0.0; dim],
        CenterSpec::Explicit { values } => {
            if values.len() != dim {
                return Err(ProblemError::LengthMismatch {
                    field: "center.values",
                    expected: dim,
                    got: values.len(),
                });
            }
            values.clone()
        }
        CenterSpec::Random { scale } => {
            let mut rng = root.derive(&[0x43]).draw(0);
            (0..dim)
                .map(|_| scale * rng.sample::<f64, _>(StandardNormal))
                .collect()
        }
    };

    let mut domain = spec.domain.clone();
    let mut smoothness = None;
    let mut strong_convexity = None;
    let (objective, x_star, sup_grad) = match &spec.family {
        Family::L1 => (
            Objective::L1 {
                center: center.clone(),
            },
            center,
            Some((dim as f64).sqrt()),
        ),
        Family::Quadratic { spectrum } => {
            let curv = spectrum.curvatures(dim);
            for &s in &curv {
                positive("spectrum", s)?;
            }
            let top = curv.iter().cloned().fold(0.0, f64::max);
            smoothness = Some(top);
            strong_convexity = Some(curv.iter().cloned().fold(f64::INFINITY, f64::min));
            let sup = weighted_reach(&domain, &center, &curv);
            (
                Objective::Quadratic {
                    center: center.clone(),
                    curv,
                },
                center,
                sup,
            )
        }
        Family::Huber { width } => {
            positive("width", *width)?;
            smoothness = Some(1.0);
            (
                Objective::Huber {
                    center: center.clone(),
                    width: *width,
                },
                center,
                Some(width * (dim as f64).sqrt()),
            )
        }
        Family::StronglyConvex { mu, lipschitz } => {
            positive("mu", *mu)?;
            positive("lipschitz", *lipschitz)?;
            if domain != ProjectionDomain::WholeSpace || spec.center != CenterSpec::Zero {
                return Err(ProblemError::BadParameter {
                    name: "domain",
                    reason: "the strongly convex family fixes its own ball and center".into(),
                });
            }
            domain = ProjectionDomain::Ball {
                center: vec![0.0; dim],
                radius: lipschitz / mu,
            };
            smoothness = Some(*mu);
            strong_convexity = Some(*mu);
            (
                Objective::StronglyConvex { mu: *mu },
                vec![0.0; dim],
                Some(*lipschitz),
            )
        }
        Family::Logistic {
            samples,
            lambda,
            label_flip,
        } => {
            positive("lambda", *lambda)?;
            if *samples == 0 {
                return Err(ProblemError::BadParameter {
                    name: "samples",
                    reason: "need at least one sample".into(),
                });
            }
            if !(0.0..=1.0).contains(label_flip) {
                return Err(ProblemError::BadParameter {
                    name: "label_flip",
                    reason: format!("must lie in [0, 1], got {label_flip}"),
                });
            }
            let data = LogisticData::generate(dim, *samples, *lambda, *label_flip, root);
            let x_star = data.solve().ok_or(ProblemError::SolveFailed)?;
            let row = data.max_row_norm();
            smoothness = Some(row * row / 4.0 + lambda);
            strong_convexity = Some(*lambda);
            let sup = match &domain {
                ProjectionDomain::WholeSpace => None,
                d => d.diameter().map(|_| row + lambda * reach_from_origin(d)),
            };
            (Objective::Logistic(data), x_star, sup)
        }
    };

    if !domain.contains(&x_star) {
        return Err(ProblemError::OptimumOutsideDomain);
    }
    let needed = spec.noise.output_bound(sup_grad);
    if needed.is_none() && !spec.noise.is_noiseless() {
        return Err(ProblemError::UnboundedNoise);
    }
    let lipschitz = match (spec.gradient_bound, needed) {
        (Some(declared), Some(n)) if declared < n => {
            return Err(ProblemError::UnattainableBound {
                declared,
                needed: n,
            })
        }
        (Some(_), None) => {
            return Err(ProblemError::BadParameter {
                name: "lipschitz",
                reason: "gradients are unbounded on this domain".into(),
            })
        }
        (Some(declared), Some(_)) => {
            positive("lipschitz", declared)?;
            Some(declared)
        }
        (None, n) => n.map(|v| v * BOUND_SLACK),
    };
    let f_star = objective.value(&x_star);
    Ok(Problem {
        spec: spec.clone(),
        objective,
        domain,
        optimum: Optimum { x_star, f_star },
        sup_grad,
        lipschitz,
        smoothness,
        strong_convexity,
    })
}

fn reach_from_origin(domain: &ProjectionDomain) -> f64 {
    match domain {
        ProjectionDomain::WholeSpace => f64::INFINITY,
        ProjectionDomain::Ball { center, radius } => norm(center) + radius,
        ProjectionDomain::Box { lower, upper } => lower
            .iter()
            .zip(upper)
            .map(|(l, u)| l.abs().max(u.abs()).powi(2))
            .sum::<f64>()
            .sqrt(),
    }
}
