//! Simultaneous orthogonal matching pursuit across subcarriers.

use nalgebra::DVector;
use num_complex::Complex64;

use super::amp::check_problem;
use crate::dictionary::MeasurementSet;
use crate::error::{domain, Error, Result};
use crate::CMat;

/// Relative threshold on the diagonal of `R` below which a re-fit is rejected.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct SompResult {
    /// `V x K` sparse estimate.
    pub estimate: CMat,
    /// Selected atoms in selection order.
    pub support: Vec<usize>,
    /// `G x K` final residual.
    pub residual: CMat,
}

pub fn somp(y: &CMat, m: &MeasurementSet, sparsity: usize) -> Result<CMat> {
    Ok(somp_detailed(y, m, sparsity)?.estimate)
}

pub fn somp_detailed(y: &CMat, m: &MeasurementSet, sparsity: usize) -> Result<SompResult> {
    check_problem(y, m)?;
    let (g, v_count, k_count) = (m.n_measurements(), m.n_atoms(), m.n_subcarriers());
    if sparsity == 0 || sparsity > g.min(v_count) {
        return Err(domain(format!("sparsity {sparsity} must lie in 1..={}", g.min(v_count))));
    }
    let mut support: Vec<usize> = Vec::with_capacity(sparsity);
    let mut residual = y.clone();
    let mut coefs: Vec<DVector<Complex64>> = Vec::new();
    for iteration in 1..=sparsity {
        let mut score = vec![0.0; v_count];
        for k in 0..k_count {
            let corr = m.a[k].adjoint() * residual.column(k);
            for (s, c) in score.iter_mut().zip(corr.iter()) {
                *s += c.norm();
            }
        }
        let mut best = None;
        for (v, &s) in score.iter().enumerate() {
            if support.contains(&v) {
                continue;
            }
            match best {
                Some((_, b)) if s <= b => {}
                _ => best = Some((v, s)),
            }
        }
        let (chosen, _) = best.expect("sparsity below atom count");
        support.push(chosen);
        coefs.clear();
        for k in 0..k_count {
            let sub = CMat::from_fn(g, support.len(), |r, c| m.a[k][(r, support[c])]);
            let coef = least_squares(&sub, &y.column(k).into_owned()).ok_or(Error::RankDeficient { iteration })?;
            residual.set_column(k, &(y.column(k) - &sub * &coef));
            coefs.push(coef);
        }
    }
    let mut estimate = CMat::zeros(v_count, k_count);
    for (k, coef) in coefs.iter().enumerate() {
        for (i, &v) in support.iter().enumerate() {
            estimate[(v, k)] = coef[i];
        }
    }
    Ok(SompResult { estimate, support, residual })
}

/// QR least squares; `None` when the columns are numerically dependent.
fn least_squares(a: &CMat, y: &DVector<Complex64>) -> Option<DVector<Complex64>> {
    let scale = a.column_iter().map(|c| c.norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        return None;
    }
    let qr = a.clone().qr();
    let r = qr.r();
    if r.diagonal().iter().any(|d| d.norm() <= RANK_TOL * scale) {
        return None;
    }
    let rhs = qr.q().adjoint() * y;
    r.solve_upper_triangular(&rhs)
}
