//! Row-wise MMSE denoiser under a Bernoulli-Gaussian prior with common support.
//!
//! For a row `x = h + Sigma^{1/2} n` across `K` subcarriers, where `h` is either
//! all-zero (probability `1 - gamma`) or `CN(0, eps I)`, the posterior mean is
//!
//! ```text
//! eta(x) = phi(x) * diag(eps / (eps + s_k)) * x
//! phi(x) = 1 / (1 + (1-gamma)/gamma * exp(-x^H P x) * prod_k (1 + eps / s_k))
//! P      = diag(eps / (s_k (s_k + eps)))
//! ```

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Lower bound applied to every per-subcarrier noise power.
pub const NOISE_FLOOR: f64 = 1e-12;
/// Bound on the exponent inside `phi` before exponentiation.
pub const EXPONENT_CLAMP: f64 = 700.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BernoulliGaussianPrior {
    pub gamma: f64,
    pub epsilon: f64,
}

impl BernoulliGaussianPrior {
    pub fn new(gamma: f64, epsilon: f64) -> Result<Self> {
        let p = Self { gamma, epsilon };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(domain(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(domain(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        Ok(())
    }
}

/// Precomputed per-subcarrier quantities for one noise profile.
#[derive(Debug, Clone)]
pub struct ShrinkageKernel {
    /// `eps / (eps + s_k)`
    pub wiener: Vec<f64>,
    /// diagonal of `P`
    pub precision: Vec<f64>,
    /// `ln((1-gamma)/gamma) + sum_k ln(1 + eps/s_k)`; unused when gamma is 0 or 1
    pub offset: f64,
    gamma: f64,
}

impl ShrinkageKernel {
    pub fn new(prior: &BernoulliGaussianPrior, noise: &[f64]) -> Result<Self> {
        prior.validate()?;
        if noise.iter().any(|s| !(*s >= 0.0)) {
            return Err(domain("noise powers must be non-negative"));
        }
        let eps = prior.epsilon;
        let floored: Vec<f64> = noise.iter().map(|s| s.max(NOISE_FLOOR)).collect();
        let wiener = floored.iter().map(|s| eps / (eps + s)).collect();
        let precision = floored.iter().map(|s| eps / (s * (s + eps))).collect();
        let log_det: f64 = floored.iter().map(|s| (eps / s).ln_1p()).sum();
        let offset = if prior.gamma > 0.0 && prior.gamma < 1.0 {
            ((1.0 - prior.gamma) / prior.gamma).ln() + log_det
        } else {
            0.0
        };
        Ok(Self { wiener, precision, offset, gamma: prior.gamma })
    }

    /// Exponent `e` with `phi = 1 / (1 + exp(e))`, already clamped.
    pub fn exponent<'a>(&self, row: impl IntoIterator<Item = &'a Complex64>) -> f64 {
        let quad: f64 = row.into_iter().zip(&self.precision).map(|(x, p)| p * x.norm_sqr()).sum();
        (self.offset - quad).clamp(-EXPONENT_CLAMP, EXPONENT_CLAMP)
    }

    pub fn phi<'a>(&self, row: impl IntoIterator<Item = &'a Complex64>) -> f64 {
        if self.gamma == 0.0 {
            0.0
        } else if self.gamma == 1.0 {
            1.0
        } else {
            1.0 / (1.0 + self.exponent(row).exp())
        }
    }
}

/// Posterior mean of one common-support row, together with `phi`.
pub fn shrinkage_mmse(row: &[Complex64], prior: &BernoulliGaussianPrior, noise: &[f64]) -> Result<(Vec<Complex64>, f64)> {
    check_len(row, noise)?;
    let kernel = ShrinkageKernel::new(prior, noise)?;
    let phi = kernel.phi(row);
    let out = row.iter().zip(&kernel.wiener).map(|(x, c)| x * (phi * c)).collect();
    Ok((out, phi))
}

/// Per-component derivative `phi * eps / (eps + s_k)`, holding `phi` constant.
pub fn shrinkage_derivative(row: &[Complex64], prior: &BernoulliGaussianPrior, noise: &[f64]) -> Result<Vec<f64>> {
    check_len(row, noise)?;
    let kernel = ShrinkageKernel::new(prior, noise)?;
    let phi = kernel.phi(row);
    Ok(kernel.wiener.iter().map(|c| phi * c).collect())
}

fn check_len(row: &[Complex64], noise: &[f64]) -> Result<()> {
    if row.len() != noise.len() {
        return Err(crate::error::mismatch(format!("row length {} vs {} noise powers", row.len(), noise.len())));
    }
    Ok(())
}
