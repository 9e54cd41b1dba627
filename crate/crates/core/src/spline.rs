//! Periodic cubic spline on equally spaced knots of the unit circle.

use crate::error::{RatchetError, Result};
use crate::linalg::CyclicTridiagonal;

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicSpline {
    knots: Vec<f64>,
    second: Vec<f64>,
}

impl PeriodicSpline {
    /// Interpolates `knots[k]` at `x = k/m`.
    pub fn new(knots: Vec<f64>) -> Result<Self> {
        let m = knots.len();
        if m < 3 {
            return Err(RatchetError::InvalidParameter("periodic spline needs at least 3 knots".into()));
        }
        if knots.iter().any(|v| !v.is_finite()) {
            return Err(RatchetError::InvalidParameter("non-finite spline knot".into()));
        }
        let h = 1.0 / m as f64;
        let rhs: Vec<f64> = (0..m).map(|k| 6.0 * (knots[(k + 1) % m] - 2.0 * knots[k] + knots[(k + m - 1) % m]) / (h * h)).collect();
        let sys = CyclicTridiagonal::new(vec![1.0; m], vec![4.0; m], vec![1.0; m])?;
        let second = sys.solve(&rhs);
        Ok(Self { knots, second })
    }

    pub fn knots(&self) -> &[f64] {
        &self.knots
    }

    fn locate(&self, x: f64) -> (usize, usize, f64, f64) {
        let m = self.knots.len();
        let s = x.rem_euclid(1.0) * m as f64;
        let k = (s.floor() as usize).min(m - 1);
        let t = s - k as f64;
        (k, (k + 1) % m, t, 1.0 / m as f64)
    }

    pub fn value(&self, x: f64) -> f64 {
        let (k, k1, t, h) = self.locate(x);
        let (a, b) = (1.0 - t, t);
        a * self.knots[k] + b * self.knots[k1] + ((a * a * a - a) * self.second[k] + (b * b * b - b) * self.second[k1]) * h * h / 6.0
    }

    pub fn derivative(&self, x: f64) -> f64 {
        let (k, k1, t, h) = self.locate(x);
        let (a, b) = (1.0 - t, t);
        (self.knots[k1] - self.knots[k]) / h + ((1.0 - 3.0 * a * a) * self.second[k] + (3.0 * b * b - 1.0) * self.second[k1]) * h / 6.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn interpolates_knots_and_is_periodic() {
        let knots: Vec<f64> = (0..12).map(|k| (2.0 * PI * k as f64 / 12.0).sin() + 0.1 * k as f64 % 0.3).collect();
        let s = PeriodicSpline::new(knots.clone()).unwrap();
        for (k, v) in knots.iter().enumerate() {
            assert!((s.value(k as f64 / 12.0) - v).abs() < 1e-13);
        }
        for x in [0.013, 0.37, 0.9] {
            assert!((s.value(x) - s.value(x + 3.0)).abs() < 1e-12);
            assert!((s.derivative(x) - s.derivative(x - 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        let knots: Vec<f64> = (0..16).map(|k| (2.0 * PI * k as f64 / 16.0).cos()).collect();
        let s = PeriodicSpline::new(knots).unwrap();
        for x in [0.0, 0.21, 0.5, 0.999] {
            let fd = (s.value(x + 1e-6) - s.value(x - 1e-6)) / 2e-6;
            assert!((fd - s.derivative(x)).abs() < 1e-6);
        }
        // Approximation quality on a smooth function.
        assert!((s.value(0.3) - (2.0 * PI * 0.3).cos()).abs() < 2e-3);
    }
}
