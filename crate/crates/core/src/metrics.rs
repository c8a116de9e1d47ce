use crate::error::{domain, mismatch, Result};
use crate::CMat;

/// `||estimate - truth||_F^2 / ||truth||_F^2`.
pub fn nmse(estimate: &CMat, truth: &CMat) -> Result<f64> {
    if estimate.shape() != truth.shape() {
        return Err(mismatch(format!("estimate {:?} vs truth {:?}", estimate.shape(), truth.shape())));
    }
    let denom = truth.norm_squared();
    if denom == 0.0 {
        return Err(domain("NMSE undefined for an all-zero reference"));
    }
    Ok((estimate - truth).norm_squared() / denom)
}

/// Batch NMSE, averaged over samples in the linear domain.
pub fn mean_nmse<'a>(pairs: impl IntoIterator<Item = (&'a CMat, &'a CMat)>) -> Result<f64> {
    let mut acc = 0.0;
    let mut n = 0usize;
    for (est, truth) in pairs {
        acc += nmse(est, truth)?;
        n += 1;
    }
    if n == 0 {
        return Err(domain("empty batch"));
    }
    Ok(acc / n as f64)
}

pub fn to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

pub fn from_db(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}
