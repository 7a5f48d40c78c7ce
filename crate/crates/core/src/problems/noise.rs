//! Bounded, unbiased perturbations of an exact subgradient.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::linalg::norm;
use crate::rng::NoiseRng;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "kebab-case")]
pub enum NoiseModel {
    #[default]
    None,
    /// `∇f + σu` with `u` uniform on the unit sphere.
    ClippedSphere { sigma: f64 },
    /// `ξ∇f / (1 - 2p)` with `ξ = -1` with probability `p`, else `+1`.
    SignFlip { p: f64 },
    /// `∇f + c(L - ‖∇f‖)u`: fills a fraction `c` of the room left under `L`.
    SlackSphere { fraction: f64 },
}

impl NoiseModel {
    pub fn validate(&self) -> Result<(), String> {
        match *self {
            NoiseModel::None => Ok(()),
            NoiseModel::ClippedSphere { sigma } if sigma.is_finite() && sigma >= 0.0 => Ok(()),
            NoiseModel::ClippedSphere { sigma } => {
                Err(format!("sigma must be finite and >= 0, got {sigma}"))
            }
            NoiseModel::SignFlip { p } if (0.0..0.5).contains(&p) => Ok(()),
            NoiseModel::SignFlip { p } => {
                Err(format!("flip probability must lie in [0, 0.5), got {p}"))
            }
            NoiseModel::SlackSphere { fraction } if (0.0..=1.0).contains(&fraction) => Ok(()),
            NoiseModel::SlackSphere { fraction } => {
                Err(format!("slack fraction must lie in [0, 1], got {fraction}"))
            }
        }
    }

    pub fn is_noiseless(&self) -> bool {
        match *self {
            NoiseModel::None => true,
            NoiseModel::ClippedSphere { sigma } => sigma == 0.0,
            NoiseModel::SignFlip { p } => p == 0.0,
            NoiseModel::SlackSphere { fraction } => fraction == 0.0,
        }
    }

    /// Largest possible output norm given `sup ‖∇f‖` over the domain.
    pub fn output_bound(&self, sup_grad: Option<f64>) -> Option<f64> {
        match *self {
            NoiseModel::None | NoiseModel::SlackSphere { .. } => sup_grad,
            NoiseModel::ClippedSphere { sigma } => sup_grad.map(|s| s + sigma),
            NoiseModel::SignFlip { p } => sup_grad.map(|s| s / (1.0 - 2.0 * p)),
        }
    }

    /// Replaces the exact gradient in `g` by one noisy sample.
    pub(crate) fn apply(&self, g: &mut [f64], bound: Option<f64>, rng: &mut NoiseRng) {
        match *self {
            NoiseModel::None => {}
            NoiseModel::ClippedSphere { sigma } => {
                if sigma > 0.0 {
                    add_sphere(g, sigma, rng);
                }
            }
            NoiseModel::SignFlip { p } => {
                if p > 0.0 {
                    let flip = rng.random::<f64>() < p;
                    let s = if flip { -1.0 } else { 1.0 } / (1.0 - 2.0 * p);
                    g.iter_mut().for_each(|v| *v *= s);
                }
            }
            NoiseModel::SlackSphere { fraction } => {
                if let Some(l) = bound {
                    let room = (l - norm(g)).max(0.0);
                    if fraction > 0.0 && room > 0.0 {
                        add_sphere(g, fraction * room, rng);
                    }
                }
            }
        }
        if let Some(l) = bound {
            let n = norm(g);
            if n > l {
                let s = l / n;
                g.iter_mut().for_each(|v| *v *= s);
                // one more pass absorbs the rounding of the rescale itself
                while norm(g) > l {
                    g.iter_mut().for_each(|v| *v *= 1.0 - f64::EPSILON);
                }
            }
        }
    }
}

/// Adds `radius · u` with `u` uniform on the unit sphere.
fn add_sphere(g: &mut [f64], radius: f64, rng: &mut NoiseRng) {
    let mut u: Vec<f64> = (0..g.len()).map(|_| rng.sample(StandardNormal)).collect();
    let mut n = norm(&u);
    while n == 0.0 {
        u.iter_mut().for_each(|v| *v = rng.sample(StandardNormal));
        n = norm(&u);
    }
    for (gi, ui) in g.iter_mut().zip(&u) {
        *gi += radius * ui / n;
    }
}
