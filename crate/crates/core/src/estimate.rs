//! Monte Carlo summaries and the order-insensitive path reducer.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::quadrature::NeumaierSum;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub n_paths: usize,
    /// Absolute bound on what truncating at `horizon` leaves out.
    pub truncation_bound: f64,
    pub horizon: f64,
}

impl MCEstimate {
    /// Sample mean and standard error with compensated sums, so the result
    /// depends only on the sample order, never on how work was split.
    pub fn from_samples(samples: &[f64], truncation_bound: f64, horizon: f64) -> Self {
        let n = samples.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                stderr: f64::NAN,
                n_paths: 0,
                truncation_bound,
                horizon,
            };
        }
        let mut sum = NeumaierSum::default();
        for &x in samples {
            sum.add(x);
        }
        let mean = sum.value() / n as f64;
        let stderr = if n > 1 {
            let mut sq = NeumaierSum::default();
            for &x in samples {
                sq.add((x - mean) * (x - mean));
            }
            (sq.value() / (n - 1) as f64 / n as f64).sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            stderr,
            n_paths: n,
            truncation_bound,
            horizon,
        }
    }

    /// Whether `target` lies within `z` standard errors plus the truncation bound.
    pub fn covers(&self, target: f64, z: f64) -> bool {
        (self.mean - target).abs() <= z * self.stderr + self.truncation_bound
    }

    pub fn z_score(&self, target: f64) -> f64 {
        let gap = self.mean - target;
        if self.stderr > 0.0 {
            gap / self.stderr
        } else if gap == 0.0 {
            0.0
        } else {
            gap.signum() * f64::INFINITY
        }
    }
}

/// Runs `f` for every path index in parallel and returns results in path order.
pub fn map_paths<T, F>(n_paths: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    (0..n_paths).into_par_iter().map(f).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_samples_have_zero_stderr() {
        let e = MCEstimate::from_samples(&[2.0; 10], 0.0, 1.0);
        assert_eq!(e.mean, 2.0);
        assert_eq!(e.stderr, 0.0);
        assert!(e.covers(2.0, 3.0));
    }

    #[test]
    fn stderr_matches_textbook_formula() {
        let e = MCEstimate::from_samples(&[1.0, 2.0, 3.0, 4.0], 0.0, 0.0);
        assert_eq!(e.mean, 2.5);
        // sample variance 5/3, divided by n
        assert!((e.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn path_order_is_preserved() {
        let v = map_paths(1000, |j| j as f64);
        assert!(v.iter().enumerate().all(|(j, &x)| x == j as f64));
    }
}
