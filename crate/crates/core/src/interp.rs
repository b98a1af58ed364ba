//! Monotone piecewise-cubic Hermite interpolation (PCHIP) on a uniform grid.
//!
//! Fritsch-Carlson slopes with the harmonic-mean interior rule. On every cell
//! the interpolant stays between its two endpoint values, so the sup-norm of
//! the interpolant equals the largest absolute sample.

use alloc::vec::Vec;

#[derive(Debug, Clone, PartialEq)]
pub struct UniformPchip {
    start: f64,
    step: f64,
    values: Vec<f64>,
    slopes: Vec<f64>,
}

impl UniformPchip {
    /// Interpolates `values` sampled at `start + k * step`. Needs at least two
    /// samples and a positive step.
    pub fn new(start: f64, step: f64, values: Vec<f64>) -> Self {
        assert!(values.len() >= 2, "PCHIP needs at least two samples");
        assert!(step > 0.0);
        let slopes = pchip_slopes(&values, step);
        Self {
            start,
            step,
            values,
            slopes,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn end(&self) -> f64 {
        self.start + self.step * (self.values.len() - 1) as f64
    }

    /// Evaluates the interpolant; arguments outside the grid are clamped.
    pub fn eval(&self, x: f64) -> f64 {
        let last = self.values.len() - 1;
        let pos = ((x - self.start) / self.step).max(0.0);
        if pos >= last as f64 {
            return self.values[last];
        }
        let k = (pos as usize).min(last - 1);
        let t = pos - k as f64;
        let (y0, y1) = (self.values[k], self.values[k + 1]);
        let (m0, m1) = (self.slopes[k] * self.step, self.slopes[k + 1] * self.step);
        let t2 = t * t;
        let t3 = t2 * t;
        (2.0 * t3 - 3.0 * t2 + 1.0) * y0
            + (t3 - 2.0 * t2 + t) * m0
            + (-2.0 * t3 + 3.0 * t2) * y1
            + (t3 - t2) * m1
    }
}

fn pchip_slopes(y: &[f64], h: f64) -> Vec<f64> {
    let n = y.len();
    let d: Vec<f64> = y.windows(2).map(|w| (w[1] - w[0]) / h).collect();
    if n == 2 {
        return alloc::vec![d[0], d[0]];
    }
    let mut m = alloc::vec![0.0; n];
    for k in 1..n - 1 {
        let (a, b) = (d[k - 1], d[k]);
        m[k] = if a * b <= 0.0 { 0.0 } else { 2.0 * a * b / (a + b) };
    }
    m[0] = edge_slope(d[0], d[1]);
    m[n - 1] = edge_slope(d[n - 2], d[n - 3]);
    m
}

// three-point one-sided estimate, limited to keep the end cells monotone
fn edge_slope(d0: f64, d1: f64) -> f64 {
    let m = (3.0 * d0 - d1) / 2.0;
    if m.signum() != d0.signum() || d0 == 0.0 {
        0.0
    } else if d0.signum() != d1.signum() && m.abs() > 3.0 * d0.abs() {
        3.0 * d0
    } else {
        m
    }
}
