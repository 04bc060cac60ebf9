//! Per-path random streams and stored Brownian increments.
//!
//! Path `j` always draws from ChaCha8 stream `j` of the run seed, so a path
//! is reproducible no matter which worker simulates it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const GENERATOR: &str = "chacha8";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRecord {
    pub seed: u64,
    pub stream: u64,
}

impl SeedRecord {
    pub fn new(seed: u64, stream: u64) -> Self {
        Self { seed, stream }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

/// Stream for path `path` of the run seeded by `seed`.
pub fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    SeedRecord::new(seed, path as u64).rng()
}

/// Draws `n` independent `N(0, dt)` variates into `out`.
#[inline]
pub fn fill_increments(rng: &mut ChaCha8Rng, sqrt_dt: f64, out: &mut [f64]) {
    for z in out.iter_mut() {
        let x: f64 = StandardNormal.sample(rng);
        *z = sqrt_dt * x;
    }
}

/// `steps` increments of an `n`-dimensional Brownian motion, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianPath {
    pub dt: f64,
    pub n: usize,
    pub increments: Vec<f64>,
    pub seed: SeedRecord,
}

impl BrownianPath {
    pub fn generate(n: usize, steps: usize, dt: f64, seed: SeedRecord) -> Result<Self> {
        if !(dt > 0.0) || !dt.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "time step must be > 0, got {dt}"
            )));
        }
        let mut increments = vec![0.0; n * steps];
        let mut rng = seed.rng();
        fill_increments(&mut rng, dt.sqrt(), &mut increments);
        Ok(Self {
            dt,
            n,
            increments,
            seed,
        })
    }

    pub fn steps(&self) -> usize {
        if self.n == 0 {
            0
        } else {
            self.increments.len() / self.n
        }
    }

    pub fn horizon(&self) -> f64 {
        self.steps() as f64 * self.dt
    }

    #[inline]
    pub fn increment(&self, step: usize) -> &[f64] {
        &self.increments[step * self.n..(step + 1) * self.n]
    }

    /// The same Brownian path observed on a grid `factor` times coarser.
    pub fn coarsen(&self, factor: usize) -> Result<Self> {
        if factor == 0 || self.steps() % factor != 0 {
            return Err(Error::InvalidArgument(format!(
                "cannot coarsen {} steps by a factor of {factor}",
                self.steps()
            )));
        }
        let steps = self.steps() / factor;
        let mut increments = vec![0.0; self.n * steps];
        for k in 0..steps {
            for sub in 0..factor {
                let src = self.increment(k * factor + sub);
                for (dst, z) in increments[k * self.n..(k + 1) * self.n].iter_mut().zip(src) {
                    *dst += z;
                }
            }
        }
        Ok(Self {
            dt: self.dt * factor as f64,
            n: self.n,
            increments,
            seed: self.seed,
        })
    }

    /// Running value `Z(t_k)` for `k = 0..=steps`.
    pub fn cumulative(&self) -> Vec<Vec<f64>> {
        let mut z = vec![0.0; self.n];
        let mut out = Vec::with_capacity(self.steps() + 1);
        out.push(z.clone());
        for k in 0..self.steps() {
            for (zi, dz) in z.iter_mut().zip(self.increment(k)) {
                *zi += dz;
            }
            out.push(z.clone());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let a = BrownianPath::generate(2, 100, 0.01, SeedRecord::new(7, 3)).unwrap();
        let b = BrownianPath::generate(2, 100, 0.01, SeedRecord::new(7, 3)).unwrap();
        let c = BrownianPath::generate(2, 100, 0.01, SeedRecord::new(7, 4)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.increments, c.increments);
    }

    #[test]
    fn coarsening_preserves_the_endpoint() {
        let a = BrownianPath::generate(1, 64, 1.0 / 64.0, SeedRecord::new(1, 0)).unwrap();
        let c = a.coarsen(8).unwrap();
        assert_eq!(c.steps(), 8);
        let fine_end = a.cumulative()[64][0];
        let coarse_end = c.cumulative()[8][0];
        assert!((fine_end - coarse_end).abs() < 1e-14);
        assert!(a.coarsen(5).is_err());
    }

    #[test]
    fn increments_have_the_right_scale() {
        let p = BrownianPath::generate(1, 200_000, 0.004, SeedRecord::new(11, 0)).unwrap();
        let var = p.increments.iter().map(|z| z * z).sum::<f64>() / p.increments.len() as f64;
        assert!((var / 0.004 - 1.0).abs() < 0.02);
    }
}
