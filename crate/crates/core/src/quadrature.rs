//! Uniform-grid quadrature on the delay window `[-d, 0]` and compensated
//! summation used by every Monte Carlo reducer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid of `m + 1` nodes on `[-d, 0]`; node 0 sits at `s = -d`,
/// node `m` at `s = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayGrid {
    pub d: f64,
    pub m: usize,
}

impl DelayGrid {
    pub fn new(d: f64, m: usize) -> Result<Self> {
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "delay window d must be > 0, got {d}"
            )));
        }
        if m < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid resolution m must be >= 2, got {m}"
            )));
        }
        Ok(Self { d, m })
    }

    #[inline]
    pub fn ds(&self) -> f64 {
        self.d / self.m as f64
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.m + 1
    }

    /// Abscissa of node `j`.
    #[inline]
    pub fn node(&self, j: usize) -> f64 {
        if j == self.m {
            0.0
        } else {
            -self.d + j as f64 * self.ds()
        }
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.node(j)).collect()
    }

    /// Trapezoid weights: `ds/2` at both ends, `ds` inside.
    pub fn trapezoid_weights(&self) -> Vec<f64> {
        trapezoid_weights(self.len(), self.ds())
    }

    /// The grid refined by an integer factor `p` (same window, `m * p` cells).
    pub fn refined(&self, p: usize) -> DelayGrid {
        DelayGrid {
            d: self.d,
            m: self.m * p,
        }
    }
}

pub fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    if n > 0 {
        w[0] = 0.5 * h;
        w[n - 1] = 0.5 * h;
    }
    w
}

/// Composite trapezoid rule for samples on a uniform grid with step `h`.
pub fn trapezoid(values: &[f64], h: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let inner = neumaier_sum(values[1..n - 1].iter().copied());
            h * (inner + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

/// Running trapezoid integral: `out[j] = ∫_{x_0}^{x_j} f`.
pub fn cumulative_trapezoid(values: &[f64], h: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = NeumaierSum::default();
    if let Some(&first) = values.first() {
        out.push(0.0);
        let mut prev = first;
        for &v in &values[1..] {
            acc.add(0.5 * h * (prev + v));
            out.push(acc.value());
            prev = v;
        }
    }
    out
}

/// Trapezoid inner product `∫ a b` of two sampled functions.
pub fn inner_product(a: &[f64], b: &[f64], h: f64) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::GridMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Ok(0.0);
    }
    let mut acc = NeumaierSum::default();
    for j in 0..n {
        let w = if j == 0 || j == n - 1 { 0.5 } else { 1.0 };
        acc.add(w * a[j] * b[j]);
    }
    Ok(h * acc.value())
}

/// Plain dot product with eight independent partial sums, so the compiler
/// can vectorise it. The summation order is fixed, so results are
/// reproducible.
#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut lanes = [0.0f64; 8];
    let xs = a.chunks_exact(8);
    let ys = b.chunks_exact(8);
    let tail: f64 = xs
        .remainder()
        .iter()
        .zip(ys.remainder())
        .map(|(x, y)| x * y)
        .sum();
    for (x, y) in xs.zip(ys) {
        for l in 0..8 {
            lanes[l] += x[l] * y[l];
        }
    }
    ((lanes[0] + lanes[4]) + (lanes[1] + lanes[5]))
        + ((lanes[2] + lanes[6]) + (lanes[3] + lanes[7]))
        + tail
}

/// Kahan–Babuška–Neumaier compensated accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn neumaier_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut acc = NeumaierSum::default();
    for x in it {
        acc.add(x);
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn trapezoid_exact_for_linear() {
        let grid = DelayGrid::new(2.0, 8).unwrap();
        let vals: Vec<f64> = grid.nodes().iter().map(|s| 3.0 * s + 1.0).collect();
        // ∫_{-2}^0 (3s + 1) ds = -6 + 2
        assert_relative_eq!(trapezoid(&vals, grid.ds()), -4.0, epsilon = 1e-14);
    }

    #[test]
    fn cumulative_ends_at_total() {
        let vals: Vec<f64> = (0..11).map(|j| (j as f64 * 0.1).exp()).collect();
        let cum = cumulative_trapezoid(&vals, 0.1);
        assert_eq!(cum[0], 0.0);
        assert_relative_eq!(cum[10], trapezoid(&vals, 0.1), epsilon = 1e-14);
    }

    #[test]
    fn grid_endpoint_is_exactly_zero() {
        let grid = DelayGrid::new(0.3, 7).unwrap();
        assert_eq!(grid.node(7), 0.0);
        assert_eq!(grid.node(0), -0.3);
    }

    #[test]
    fn inner_product_rejects_mismatch() {
        assert!(matches!(
            inner_product(&[1.0, 2.0], &[1.0, 2.0, 3.0], 0.5),
            Err(Error::GridMismatch { .. })
        ));
    }

    #[test]
    fn dot_matches_naive_sum() {
        let a: Vec<f64> = (0..37).map(|i| i as f64 * 0.5).collect();
        let b: Vec<f64> = (0..37).map(|i| 1.0 / (1.0 + i as f64)).collect();
        let naive: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        assert!((dot(&a, &b) - naive).abs() < 1e-12);
    }

    #[test]
    fn neumaier_recovers_cancellation() {
        let s = neumaier_sum([1.0, 1e100, 1.0, -1e100]);
        assert_eq!(s, 2.0);
    }
}
