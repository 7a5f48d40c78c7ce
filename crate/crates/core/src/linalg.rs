//! Small dense-vector helpers on `&[f64]`.

pub type Point = Vec<f64>;

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm_sq(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    norm_sq(a).sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Point {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn scale(a: &[f64], s: f64) -> Point {
    a.iter().map(|x| x * s).collect()
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CompensatedSum {
    sum: f64,
    compensation: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, value: f64) {
        let t = self.sum + value;
        if self.sum.abs() >= value.abs() {
            self.compensation += (self.sum - t) + value;
        } else {
            self.compensation += (value - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.compensation
    }
}

/// Per-coordinate compensated sum of vectors.
#[derive(Debug, Clone)]
pub struct VectorSum {
    parts: Vec<CompensatedSum>,
}

impl VectorSum {
    pub fn zeros(dim: usize) -> Self {
        VectorSum {
            parts: vec![CompensatedSum::new(); dim],
        }
    }

    pub fn add(&mut self, x: &[f64]) {
        for (p, v) in self.parts.iter_mut().zip(x) {
            p.add(*v);
        }
    }

    pub fn mean(&self, count: u64) -> Point {
        let n = count as f64;
        self.parts.iter().map(|p| p.value() / n).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn compensated_sum_recovers_small_terms() {
        let mut s = CompensatedSum::new();
        s.add(1e16);
        for _ in 0..10 {
            s.add(1.0);
        }
        s.add(-1e16);
        assert_eq!(s.value(), 10.0);
    }

    #[test]
    fn vector_mean() {
        let mut v = VectorSum::zeros(2);
        v.add(&[1.0, 2.0]);
        v.add(&[3.0, -2.0]);
        assert_eq!(v.mean(2), vec![2.0, 0.0]);
    }
}
