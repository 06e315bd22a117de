//! Natural cubic spline interpolation and analytic global minimum.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SplineError {
    #[error("insufficient_observations: need at least 4, got {0}")]
    InsufficientObservations(usize),
    #[error("steps must be strictly increasing (violation at index {0})")]
    NonIncreasingSteps(usize),
    #[error("non-finite or non-positive value at index {0}")]
    BadValue(usize),
    #[error("evaluation point {x} outside domain [{lo}, {hi}]")]
    OutOfDomain { x: f64, lo: f64, hi: f64 },
}

/// Natural cubic spline through `(x, y)` knots: C2 everywhere, zero
/// second derivative at both endpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CubicSpline {
    xs: Vec<f64>,
    ys: Vec<f64>,
    /// Second derivatives at the knots.
    m: Vec<f64>,
}

impl CubicSpline {
    pub fn fit(points: &[(f64, f64)]) -> Result<Self, SplineError> {
        let n = points.len();
        if n < 4 {
            return Err(SplineError::InsufficientObservations(n));
        }
        for (i, &(_, y)) in points.iter().enumerate() {
            if !y.is_finite() || y <= 0.0 {
                return Err(SplineError::BadValue(i));
            }
        }
        Self::fit_unchecked_sign(points)
    }

    /// Fit without the positivity requirement on `y` (used for general
    /// curves in tests and planning code).
    pub fn fit_unchecked_sign(points: &[(f64, f64)]) -> Result<Self, SplineError> {
        let n = points.len();
        if n < 4 {
            return Err(SplineError::InsufficientObservations(n));
        }
        for (i, &(x, y)) in points.iter().enumerate() {
            if !x.is_finite() || !y.is_finite() {
                return Err(SplineError::BadValue(i));
            }
            if i > 0 && x <= points[i - 1].0 {
                return Err(SplineError::NonIncreasingSteps(i));
            }
        }
        let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        let m = solve_second_derivatives(&xs, &ys);
        Ok(CubicSpline { xs, ys, m })
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.xs[0], *self.xs.last().unwrap())
    }

    pub fn knots(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.xs.iter().copied().zip(self.ys.iter().copied())
    }

    /// Second derivative at knot `i`.
    pub fn second_derivative_at_knot(&self, i: usize) -> f64 {
        self.m[i]
    }

    fn segment_of(&self, x: f64) -> usize {
        match self.xs.binary_search_by(|k| k.total_cmp(&x)) {
            Ok(i) => i.min(self.xs.len() - 2),
            Err(i) => i.saturating_sub(1).min(self.xs.len() - 2),
        }
    }

    pub fn eval(&self, x: f64) -> Result<f64, SplineError> {
        let (lo, hi) = self.domain();
        if x < lo || x > hi {
            return Err(SplineError::OutOfDomain { x, lo, hi });
        }
        let i = self.segment_of(x);
        let (a, b, c, d) = self.segment_coeffs(i);
        let dx = x - self.xs[i];
        Ok(a + dx * (b + dx * (c + dx * d)))
    }

    /// Coefficients of segment `i` as `a + b·dx + c·dx² + d·dx³` with
    /// `dx = x − x_i`.
    fn segment_coeffs(&self, i: usize) -> (f64, f64, f64, f64) {
        let h = self.xs[i + 1] - self.xs[i];
        let a = self.ys[i];
        let b = (self.ys[i + 1] - self.ys[i]) / h - h * (2.0 * self.m[i] + self.m[i + 1]) / 6.0;
        let c = self.m[i] / 2.0;
        let d = (self.m[i + 1] - self.m[i]) / (6.0 * h);
        (a, b, c, d)
    }

    /// Global minimum over the domain, found analytically: per segment
    /// the derivative is quadratic, so interior critical points come from
    /// its roots; knots and domain endpoints complete the candidate set.
    /// Ties resolve to the smallest `x`.
    pub fn minimum(&self) -> (f64, f64) {
        let mut best_x = self.xs[0];
        let mut best_y = self.ys[0];
        let mut consider = |x: f64, y: f64| {
            if y < best_y {
                best_y = y;
                best_x = x;
            } else if y == best_y && x < best_x {
                best_x = x;
            }
        };
        for i in 0..self.xs.len() - 1 {
            let (a, b, c, d) = self.segment_coeffs(i);
            let h = self.xs[i + 1] - self.xs[i];
            // Knot at the right end of the segment.
            consider(self.xs[i + 1], self.ys[i + 1]);
            // f'(dx) = b + 2c·dx + 3d·dx²
            let mut roots = [f64::NAN; 2];
            let mut count = 0;
            if d.abs() > 0.0 {
                let qa = 3.0 * d;
                let qb = 2.0 * c;
                let disc = qb * qb - 4.0 * qa * b;
                if disc >= 0.0 {
                    let sq = disc.sqrt();
                    roots[0] = (-qb - sq) / (2.0 * qa);
                    roots[1] = (-qb + sq) / (2.0 * qa);
                    count = 2;
                }
            } else if c.abs() > 0.0 {
                roots[0] = -b / (2.0 * c);
                count = 1;
            }
            for &r in roots.iter().take(count) {
                if r > 0.0 && r < h {
                    let y = a + r * (b + r * (c + r * d));
                    consider(self.xs[i] + r, y);
                }
            }
        }
        (best_x, best_y)
    }
}

/// Solve the natural-spline tridiagonal system for the knot second
/// derivatives (Thomas algorithm).
fn solve_second_derivatives(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let n = xs.len();
    let mut m = vec![0.0; n];
    let interior = n - 2;
    let h: Vec<f64> = xs.windows(2).map(|w| w[1] - w[0]).collect();
    let mut diag = vec![0.0; interior];
    let mut rhs = vec![0.0; interior];
    let mut upper = vec![0.0; interior];
    for i in 0..interior {
        diag[i] = 2.0 * (h[i] + h[i + 1]);
        upper[i] = h[i + 1];
        rhs[i] = 6.0
            * ((ys[i + 2] - ys[i + 1]) / h[i + 1] - (ys[i + 1] - ys[i]) / h[i]);
    }
    // Forward sweep; the sub-diagonal entry for row i is h[i].
    for i in 1..interior {
        let w = h[i] / diag[i - 1];
        diag[i] -= w * upper[i - 1];
        rhs[i] -= w * rhs[i - 1];
    }
    if interior > 0 {
        m[interior] = rhs[interior - 1] / diag[interior - 1];
        for i in (0..interior - 1).rev() {
            m[i + 1] = (rhs[i] - upper[i] * m[i + 2]) / diag[i];
        }
    }
    m
}
