//! Approximate message passing with the Bernoulli-Gaussian MMSE denoiser.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::shrinkage::{BernoulliGaussianPrior, ShrinkageKernel};
use crate::dictionary::MeasurementSet;
use crate::error::{domain, mismatch, Result};
use crate::{CMat, CVec};

/// Iterate of (G)MMV-AMP after iteration `iteration`.
#[derive(Debug, Clone)]
pub struct AmpState {
    /// `V x K` sparse estimate.
    pub estimate: CMat,
    /// `G x K` residual.
    pub residual: CMat,
    /// Per-subcarrier noise power used by the shrinkage of this iteration.
    pub noise: Vec<f64>,
    pub iteration: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GmmvAmpConfig {
    pub iterations: usize,
    /// Weight on the fresh residual; 1 disables damping.
    pub damping: f64,
}

impl Default for GmmvAmpConfig {
    fn default() -> Self {
        Self { iterations: 80, damping: 0.9 }
    }
}

/// Single-measurement-vector AMP on one subcarrier.
pub fn smv_amp(y: &CVec, a: &CMat, prior: &BernoulliGaussianPrior, iterations: usize) -> Result<CVec> {
    Ok(smv_amp_trace(y, a, prior, iterations)?.pop().map(|(h, _)| h).unwrap_or_else(|| CVec::zeros(a.ncols())))
}

/// All iterates `(estimate, residual)` for `t = 1..=iterations`.
pub fn smv_amp_trace(y: &CVec, a: &CMat, prior: &BernoulliGaussianPrior, iterations: usize) -> Result<Vec<(CVec, CVec)>> {
    if y.len() != a.nrows() {
        return Err(mismatch(format!("y has {} entries, A has {} rows", y.len(), a.nrows())));
    }
    if iterations == 0 {
        return Err(domain("need at least one iteration"));
    }
    let g = a.nrows() as f64;
    let mut h = CVec::zeros(a.ncols());
    let mut v = y.clone();
    let mut out = Vec::with_capacity(iterations);
    for _ in 0..iterations {
        let pseudo = &h + a.adjoint() * &v;
        let sigma2 = v.norm_squared() / g;
        let kernel = ShrinkageKernel::new(prior, &[sigma2])?;
        let mut b = 0.0;
        for (hj, xj) in h.iter_mut().zip(pseudo.iter()) {
            let phi = kernel.phi(std::iter::once(xj));
            *hj = xj * (phi * kernel.wiener[0]);
            b += phi * kernel.wiener[0];
        }
        b /= g;
        v = y - a * &h + &v * Complex64::from(b);
        out.push((h.clone(), v.clone()));
    }
    Ok(out)
}

pub(crate) fn check_problem(y: &CMat, m: &MeasurementSet) -> Result<()> {
    if y.ncols() != m.n_subcarriers() || y.nrows() != m.n_measurements() {
        return Err(mismatch(format!(
            "observations {:?} vs measurements (G = {}, K = {})",
            y.shape(),
            m.n_measurements(),
            m.n_subcarriers()
        )));
    }
    Ok(())
}

/// Row-wise shrinkage of the pseudo-observation `pseudo` (`V x K`): returns the
/// estimate and the Onsager coefficients `b_bar[k] = (1/G) sum_v phi_v c_k`.
pub(crate) fn shrink_rows(pseudo: &CMat, kernel: &ShrinkageKernel, g: usize) -> (CMat, Vec<f64>, Vec<f64>) {
    let (v_count, k_count) = pseudo.shape();
    let mut est = CMat::zeros(v_count, k_count);
    let mut phis = Vec::with_capacity(v_count);
    for v in 0..v_count {
        let phi = kernel.phi(pseudo.row(v).iter());
        for k in 0..k_count {
            est[(v, k)] = pseudo[(v, k)] * (phi * kernel.wiener[k]);
        }
        phis.push(phi);
    }
    let phi_sum: f64 = phis.iter().sum();
    let b_bar = kernel.wiener.iter().map(|c| c * phi_sum / g as f64).collect();
    (est, b_bar, phis)
}

/// Damped GMMV-AMP: per-subcarrier matched filtering, joint row-wise shrinkage
/// across subcarriers, Onsager-corrected residuals blended as
/// `v_t <- damping v_t + (1 - damping) v_{t-1}`.
pub fn gmmv_amp(y: &CMat, m: &MeasurementSet, prior: &BernoulliGaussianPrior, config: &GmmvAmpConfig) -> Result<CMat> {
    Ok(gmmv_amp_trace(y, m, prior, config)?.pop().expect("at least one iteration").estimate)
}

pub fn gmmv_amp_trace(y: &CMat, m: &MeasurementSet, prior: &BernoulliGaussianPrior, config: &GmmvAmpConfig) -> Result<Vec<AmpState>> {
    check_problem(y, m)?;
    if config.iterations == 0 {
        return Err(domain("need at least one iteration"));
    }
    if !(config.damping > 0.0 && config.damping <= 1.0) {
        return Err(domain(format!("damping must lie in (0, 1], got {}", config.damping)));
    }
    let (g, v_count, k_count) = (m.n_measurements(), m.n_atoms(), m.n_subcarriers());
    let mut est = CMat::zeros(v_count, k_count);
    let mut resid = y.clone();
    let mut states = Vec::with_capacity(config.iterations);
    let alpha = Complex64::from(config.damping);
    let beta = Complex64::from(1.0 - config.damping);
    for t in 1..=config.iterations {
        let mut pseudo = CMat::zeros(v_count, k_count);
        let mut noise = vec![0.0; k_count];
        for k in 0..k_count {
            let vk = resid.column(k);
            pseudo.set_column(k, &(est.column(k) + m.a[k].adjoint() * vk));
            noise[k] = vk.norm_squared() / g as f64;
        }
        let kernel = ShrinkageKernel::new(prior, &noise)?;
        let (new_est, b, _) = shrink_rows(&pseudo, &kernel, g);
        let mut new_resid = CMat::zeros(g, k_count);
        for k in 0..k_count {
            let fresh = y.column(k) - &m.a[k] * new_est.column(k) + resid.column(k) * Complex64::from(b[k]);
            new_resid.set_column(k, &(fresh * alpha + resid.column(k) * beta));
        }
        est = new_est;
        resid = new_resid;
        states.push(AmpState { estimate: est.clone(), residual: resid.clone(), noise, iteration: t });
    }
    Ok(states)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{complex_normal, rng_from_seed};

    fn random_gaussian(rows: usize, cols: usize, seed: u64) -> CMat {
        let mut rng = rng_from_seed(seed);
        CMat::from_fn(rows, cols, |_, _| complex_normal(&mut rng, 1.0 / rows as f64))
    }

    /// Least squares restricted to the planted support.
    fn support_ls(a: &CMat, y: &CVec, support: &[usize]) -> CVec {
        let sub = CMat::from_fn(a.nrows(), support.len(), |r, c| a[(r, support[c])]);
        let coef = (sub.adjoint() * &sub).try_inverse().unwrap() * sub.adjoint() * y;
        let mut full = CVec::zeros(a.ncols());
        for (i, &s) in support.iter().enumerate() {
            full[s] = coef[i];
        }
        full
    }

    #[test]
    fn zero_observation_is_fixed_point() {
        let a = random_gaussian(8, 16, 1);
        let prior = BernoulliGaussianPrior::new(0.1, 1.0).unwrap();
        for (h, _) in smv_amp_trace(&CVec::zeros(8), &a, &prior, 5).unwrap() {
            assert!(h.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
        }
        let m = MeasurementSet::new(vec![a.clone(), a]).unwrap();
        let est = gmmv_amp(&CMat::zeros(8, 2), &m, &prior, &GmmvAmpConfig::default()).unwrap();
        assert!(est.iter().all(|z| *z == Complex64::new(0.0, 0.0)));
    }

    #[test]
    fn identity_matrix_finds_support_in_one_iteration() {
        let a = CMat::identity(6, 6);
        let mut y = CVec::zeros(6);
        y[4] = Complex64::new(1.3, -0.4);
        let prior = BernoulliGaussianPrior::new(1.0 / 6.0, 1.0).unwrap();
        let h = smv_amp(&y, &a, &prior, 1).unwrap();
        let best = h.iter().enumerate().max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap()).unwrap().0;
        assert_eq!(best, 4);
    }

    #[test]
    fn smv_recovers_two_sparse_vector() {
        let a = random_gaussian(8, 16, 3);
        let mut x = CVec::zeros(16);
        x[2] = Complex64::new(1.0, 0.5);
        x[11] = Complex64::new(-0.8, 0.9);
        let y = &a * &x;
        let truth = support_ls(&a, &y, &[2, 11]);
        assert!((&truth - &x).norm() < 1e-10);
        let prior = BernoulliGaussianPrior::new(2.0 / 16.0, 1.0).unwrap();
        let h = smv_amp(&y, &a, &prior, 30).unwrap();
        let nmse = (&h - &truth).norm_squared() / truth.norm_squared();
        assert!(10.0 * nmse.log10() < -40.0, "nmse {nmse}");
    }

    #[test]
    fn gmmv_with_one_subcarrier_equals_smv() {
        let a = random_gaussian(10, 24, 5);
        let mut rng = rng_from_seed(6);
        let y = CVec::from_fn(10, |_, _| complex_normal(&mut rng, 1.0));
        let prior = BernoulliGaussianPrior::new(0.2, 0.7).unwrap();
        let smv = smv_amp_trace(&y, &a, &prior, 12).unwrap();
        let m = MeasurementSet::new(vec![a]).unwrap();
        let ymat = CMat::from_column_slice(10, 1, y.as_slice());
        let cfg = GmmvAmpConfig { iterations: 12, damping: 1.0 };
        let gmmv = gmmv_amp_trace(&ymat, &m, &prior, &cfg).unwrap();
        for ((h, v), s) in smv.iter().zip(&gmmv) {
            assert!((h - s.estimate.column(0)).norm() <= 1e-10 * h.norm().max(1.0));
            assert!((v - s.residual.column(0)).norm() <= 1e-10 * v.norm().max(1.0));
        }
    }

    fn on_grid_far_field(seed: u64, snr_db: f64) -> (CMat, MeasurementSet, CMat, Vec<usize>) {
        use crate::dictionary::{assemble_measurements, build_dft_wrd, Dictionary};
        use crate::frontend::{gen_pilots, simulate_rx};
        use rand::Rng;
        let geometry = crate::geometry::ArrayGeometry::new(32, 70e9, 10e9, 8).unwrap();
        let dict = build_dft_wrd(&geometry, 1).unwrap();
        let pilots = gen_pilots(&geometry, 16, 2, seed).unwrap();
        let m = assemble_measurements(&pilots, &dict).unwrap();
        let mut rng = rng_from_seed(seed + 1000);
        let first = rng.random_range(0..32);
        let support = vec![first, (first + 4 + rng.random_range(0..24)) % 32];
        let mut x = CMat::zeros(32, 8);
        for &s in &support {
            for k in 0..8 {
                x[(s, k)] = complex_normal(&mut rng, 1.0);
            }
        }
        let h = dict.synthesize(&x).unwrap();
        let y = simulate_rx(&h, &pilots, snr_db, seed + 2000).unwrap().noisy;
        // unit-order columns
        let s = m.rms_column_norm();
        (y.unscale(s), m.scaled(1.0 / s), x, support)
    }

    #[test]
    fn gmmv_recovers_on_grid_far_field_support() {
        let (y, m, x, mut support) = on_grid_far_field(7, f64::INFINITY);
        support.sort();
        let prior = BernoulliGaussianPrior::new(2.0 / 32.0, 1.0).unwrap();
        let est = gmmv_amp(&y, &m, &prior, &GmmvAmpConfig::default()).unwrap();
        let energy: Vec<f64> = (0..32).map(|r| est.row(r).norm_squared()).collect();
        let mut found: Vec<usize> = (0..32).collect();
        found.sort_by(|a, b| energy[*b].partial_cmp(&energy[*a]).unwrap());
        found.truncate(2);
        found.sort();
        assert_eq!(found, support);
        let mut ls = CMat::zeros(32, 8);
        for k in 0..8 {
            let col = support_ls(&m.a[k], &y.column(k).into_owned(), &support);
            ls.set_column(k, &col);
        }
        assert!((&ls - &x).norm() < 1e-8 * x.norm());
        let nmse = (&est - &ls).norm_squared() / ls.norm_squared();
        assert!(10.0 * nmse.log10() < -40.0, "nmse {nmse}");
    }

    #[test]
    fn nmse_non_increasing_in_snr() {
        let prior = BernoulliGaussianPrior::new(2.0 / 32.0, 1.0).unwrap();
        let cfg = GmmvAmpConfig { iterations: 40, damping: 0.9 };
        let mut means = Vec::new();
        for snr in [-10.0, 0.0, 10.0] {
            let total: f64 = (0..200)
                .map(|t| {
                    let (y, m, x, _) = on_grid_far_field(t, snr);
                    let est = gmmv_amp(&y, &m, &prior, &cfg).unwrap();
                    (&est - &x).norm_squared() / x.norm_squared()
                })
                .sum();
            means.push(total / 200.0);
        }
        assert!(means[0] >= means[1] && means[1] >= means[2], "{means:?}");
    }

    #[test]
    fn rejects_bad_inputs() {
        let a = random_gaussian(4, 8, 1);
        let prior = BernoulliGaussianPrior::new(0.1, 1.0).unwrap();
        assert!(smv_amp(&CVec::zeros(5), &a, &prior, 3).is_err());
        let m = MeasurementSet::new(vec![a]).unwrap();
        assert!(gmmv_amp(&CMat::zeros(4, 2), &m, &prior, &GmmvAmpConfig::default()).is_err());
        let bad = GmmvAmpConfig { iterations: 5, damping: 0.0 };
        assert!(gmmv_amp(&CMat::zeros(4, 1), &m, &prior, &bad).is_err());
    }
}
