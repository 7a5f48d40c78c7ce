//! Regularized logistic regression on synthetic data.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::linalg::{dot, norm, norm_sq, Point};
use crate::rng::StreamId;

#[derive(Debug, Clone)]
pub struct LogisticData {
    /// Rows `y_i a_i`, each of norm at most 1.
    pub rows: Vec<Point>,
    pub lambda: f64,
}

impl LogisticData {
    /// `n` samples in dimension `d` with labels from a random separator,
    /// a fraction `flip` of them flipped.
    pub fn generate(dim: usize, n: usize, lambda: f64, flip: f64, seed: StreamId) -> Self {
        let mut rng = seed.derive(&[0x4c4f47]).draw(0);
        let w: Point = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let rows = (0..n)
            .map(|_| {
                let mut a: Point = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
                let na = norm(&a).max(f64::MIN_POSITIVE);
                let r: f64 = rng.random();
                a.iter_mut().for_each(|v| *v *= r / na);
                let mut y = if dot(&a, &w) >= 0.0 { 1.0 } else { -1.0 };
                if rng.random::<f64>() < flip {
                    y = -y;
                }
                a.iter_mut().for_each(|v| *v *= y);
                a
            })
            .collect();
        LogisticData { rows, lambda }
    }

    pub fn dimension(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len())
    }

    pub fn max_row_norm(&self) -> f64 {
        self.rows.iter().map(|r| norm(r)).fold(0.0, f64::max)
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        let n = self.rows.len() as f64;
        let loss: f64 = self.rows.iter().map(|r| softplus(-dot(r, x))).sum();
        loss / n + 0.5 * self.lambda * norm_sq(x)
    }

    pub fn gradient(&self, x: &[f64], out: &mut [f64]) {
        let n = self.rows.len() as f64;
        for (o, xi) in out.iter_mut().zip(x) {
            *o = self.lambda * xi;
        }
        for r in &self.rows {
            let w = -sigmoid(-dot(r, x)) / n;
            for (o, ri) in out.iter_mut().zip(r) {
                *o += w * ri;
            }
        }
    }

    fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let d = x.len();
        let n = self.rows.len() as f64;
        let mut h = DMatrix::<f64>::identity(d, d) * self.lambda;
        for r in &self.rows {
            let s = sigmoid(dot(r, x));
            let w = s * (1.0 - s) / n;
            let v = DVector::from_column_slice(r);
            h += &v * v.transpose() * w;
        }
        h
    }

    /// Unconstrained minimizer by damped Newton iteration.
    pub fn solve(&self) -> Option<Point> {
        let d = self.dimension();
        let mut x = vec![0.0; d];
        let mut g = vec![0.0; d];
        for _ in 0..100 {
            self.gradient(&x, &mut g);
            if norm(&g) < 1e-15 {
                break;
            }
            let step = self
                .hessian(&x)
                .cholesky()?
                .solve(&DVector::from_column_slice(&g));
            let f0 = self.value(&x);
            let mut t = 1.0;
            loop {
                let trial: Point = x.iter().zip(step.iter()).map(|(a, s)| a - t * s).collect();
                if self.value(&trial) <= f0 || t < 1e-10 {
                    x = trial;
                    break;
                }
                t *= 0.5;
            }
        }
        self.gradient(&x, &mut g);
        (norm(&g) < 1e-12).then_some(x)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}
