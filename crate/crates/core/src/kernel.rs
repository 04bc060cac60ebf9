//! Delay kernels `φ` on `[-d, 0]`.
//!
//! Named kernels carry closed forms for the discounted mass and for the
//! capitalised past-income weights; sampled kernels fall back to trapezoid
//! quadrature on the shared delay grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{cumulative_trapezoid, trapezoid, DelayGrid};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kernel {
    Zero,
    /// `φ(s) = value`.
    Constant {
        value: f64,
    },
    /// `φ(s) = scale · e^{rate·s}`.
    Exponential {
        scale: f64,
        rate: f64,
    },
    /// Samples at the `m + 1` nodes of the delay grid.
    Sampled {
        values: Vec<f64>,
    },
}

/// `∫_0^len e^{-c u} du`, stable as `c → 0`.
pub(crate) fn exp_window(c: f64, len: f64) -> f64 {
    let x = c * len;
    if x.abs() < 1e-8 {
        len * (1.0 - 0.5 * x)
    } else {
        -(-x).exp_m1() / c
    }
}

impl Kernel {
    pub fn check(&self, grid: &DelayGrid) -> Result<()> {
        match self {
            Kernel::Sampled { values } if values.len() != grid.len() => Err(Error::GridMismatch {
                expected: grid.len(),
                actual: values.len(),
            }),
            Kernel::Sampled { values } if values.iter().any(|v| !v.is_finite()) => Err(
                Error::InvalidArgument("sampled kernel has non-finite values".into()),
            ),
            Kernel::Constant { value } if !value.is_finite() => Err(Error::InvalidArgument(
                "constant kernel value is not finite".into(),
            )),
            Kernel::Exponential { scale, rate } if !scale.is_finite() || !rate.is_finite() => Err(
                Error::InvalidArgument("exponential kernel has non-finite parameters".into()),
            ),
            _ => Ok(()),
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            Kernel::Zero => true,
            Kernel::Constant { value } => *value == 0.0,
            Kernel::Exponential { scale, .. } => *scale == 0.0,
            Kernel::Sampled { values } => values.iter().all(|&v| v == 0.0),
        }
    }

    pub fn is_nonnegative(&self) -> bool {
        match self {
            Kernel::Zero => true,
            Kernel::Constant { value } => *value >= 0.0,
            Kernel::Exponential { scale, .. } => *scale >= 0.0,
            Kernel::Sampled { values } => values.iter().all(|&v| v >= 0.0),
        }
    }

    /// `φ(s)`; sampled kernels are interpolated linearly between nodes.
    pub fn eval(&self, s: f64, grid: &DelayGrid) -> f64 {
        match self {
            Kernel::Zero => 0.0,
            Kernel::Constant { value } => *value,
            Kernel::Exponential { scale, rate } => scale * (rate * s).exp(),
            Kernel::Sampled { values } => interpolate(values, s, grid),
        }
    }

    pub fn on_grid(&self, grid: &DelayGrid) -> Vec<f64> {
        match self {
            Kernel::Sampled { values } => values.clone(),
            _ => grid
                .nodes()
                .into_iter()
                .map(|s| self.eval(s, grid))
                .collect(),
        }
    }

    /// `(∫ e^{a s} φ(s) ds, ∫ e^{a s} |φ(s)| ds)` over `[-d, 0]` with `a = r + δ`.
    pub fn discounted_mass(&self, a: f64, grid: &DelayGrid) -> (f64, f64) {
        let d = grid.d;
        match self {
            Kernel::Zero => (0.0, 0.0),
            Kernel::Constant { value } => {
                let e = exp_window(a, d);
                (value * e, value.abs() * e)
            }
            Kernel::Exponential { scale, rate } => {
                let e = exp_window(a + rate, d);
                (scale * e, scale.abs() * e)
            }
            Kernel::Sampled { values } => {
                let ds = grid.ds();
                let disc: Vec<f64> = grid.nodes().iter().map(|s| (a * s).exp()).collect();
                let signed: Vec<f64> = values.iter().zip(&disc).map(|(v, e)| v * e).collect();
                let abs: Vec<f64> = values.iter().zip(&disc).map(|(v, e)| v.abs() * e).collect();
                let cum = cumulative_trapezoid(&signed, ds);
                (*cum.last().unwrap_or(&0.0), trapezoid(&abs, ds))
            }
        }
    }

    /// `∫_{-d}^s e^{-a(s-τ)} φ(τ) dτ` at every grid node (without the `g∞` factor).
    pub fn memory_profile(&self, a: f64, grid: &DelayGrid) -> Vec<f64> {
        match self {
            Kernel::Sampled { values } => {
                let nodes = grid.nodes();
                let integrand: Vec<f64> = values
                    .iter()
                    .zip(&nodes)
                    .map(|(v, s)| v * (a * s).exp())
                    .collect();
                let cum = cumulative_trapezoid(&integrand, grid.ds());
                cum.iter()
                    .zip(&nodes)
                    .map(|(c, s)| c * (-a * s).exp())
                    .collect()
            }
            _ => {
                let mut out: Vec<f64> = grid
                    .nodes()
                    .into_iter()
                    .map(|s| self.memory_at(a, s, grid))
                    .collect();
                out[0] = 0.0;
                out
            }
        }
    }

    /// Pointwise memory profile; sampled kernels interpolate the grid profile.
    pub fn memory_at(&self, a: f64, s: f64, grid: &DelayGrid) -> f64 {
        let len = s + grid.d;
        match self {
            Kernel::Zero => 0.0,
            Kernel::Constant { value } => value * exp_window(a, len),
            Kernel::Exponential { scale, rate } => {
                scale * (rate * s).exp() * exp_window(a + rate, len)
            }
            Kernel::Sampled { .. } => interpolate(&self.memory_profile(a, grid), s, grid),
        }
    }
}

fn interpolate(values: &[f64], s: f64, grid: &DelayGrid) -> f64 {
    let x = ((s + grid.d) / grid.ds()).clamp(0.0, grid.m as f64);
    let j = (x.floor() as usize).min(grid.m - 1);
    let frac = x - j as f64;
    values[j] * (1.0 - frac) + values[j + 1] * frac
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn constant_kernel_mass_matches_closed_form() {
        let grid = DelayGrid::new(2.0, 50).unwrap();
        let (b, bb) = Kernel::Constant { value: 0.05 }.discounted_mass(0.05, &grid);
        // (φ̄ / a)(1 - e^{-a d}) with a = 0.05, d = 2
        assert_relative_eq!(b, 0.095_162_581_964_040_43, epsilon = 1e-15);
        assert_eq!(b, bb);
    }

    #[test]
    fn sampled_constant_matches_named_to_quadrature_order() {
        let grid = DelayGrid::new(2.0, 400).unwrap();
        let named = Kernel::Constant { value: 0.05 };
        let sampled = Kernel::Sampled {
            values: named.on_grid(&grid),
        };
        let (a, _) = named.discounted_mass(0.03, &grid);
        let (b, _) = sampled.discounted_mass(0.03, &grid);
        assert!((a - b).abs() < 1e-7);
        let pa = named.memory_profile(0.03, &grid);
        let pb = sampled.memory_profile(0.03, &grid);
        for (x, y) in pa.iter().zip(&pb) {
            assert!((x - y).abs() < 1e-7);
        }
    }

    #[test]
    fn exponential_kernel_mass_handles_cancelling_rate() {
        let grid = DelayGrid::new(1.5, 10).unwrap();
        // rate = -a makes the discounted integrand constant.
        let k = Kernel::Exponential {
            scale: 0.2,
            rate: -0.04,
        };
        let (b, _) = k.discounted_mass(0.04, &grid);
        assert_relative_eq!(b, 0.2 * 1.5, epsilon = 1e-12);
    }

    #[test]
    fn sign_changing_kernel_has_larger_absolute_mass() {
        let grid = DelayGrid::new(1.0, 20).unwrap();
        let values: Vec<f64> = grid.nodes().iter().map(|s| (6.0 * s).sin()).collect();
        let (b, bb) = Kernel::Sampled { values }.discounted_mass(0.03, &grid);
        assert!(bb > b);
    }

    #[test]
    fn sampled_length_is_checked() {
        let grid = DelayGrid::new(1.0, 4).unwrap();
        assert!(Kernel::Sampled {
            values: vec![0.0; 4]
        }
        .check(&grid)
        .is_err());
        assert!(Kernel::Sampled {
            values: vec![0.0; 5]
        }
        .check(&grid)
        .is_ok());
    }
}
