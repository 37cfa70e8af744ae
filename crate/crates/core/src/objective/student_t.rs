//! Isotropic 3D Student-t likelihood.

use crate::{Error, Result};

/// Terms of the log density that do not depend on `x`, `mu` or `sigma`.
pub fn student_t_log_normalizer(nu: f64) -> f64 {
    libm::lgamma(0.5 * (nu + 3.0)) - libm::lgamma(0.5 * nu) - 1.5 * (nu * std::f64::consts::PI).ln()
}

pub fn student_t_logpdf(x: &[f64; 3], mu: &[f64; 3], sigma: f64, nu: f64) -> Result<f64> {
    if !(sigma > 0.0) {
        return Err(Error::pre(format!("sigma must be positive, got {sigma}")));
    }
    if !(nu > 0.0) {
        return Err(Error::pre(format!("nu must be positive, got {nu}")));
    }
    Ok(logpdf_unchecked(student_t_log_normalizer(nu), x, mu, sigma, nu))
}

pub(crate) fn logpdf_unchecked(norm: f64, x: &[f64; 3], mu: &[f64; 3], sigma: f64, nu: f64) -> f64 {
    let r2 = sq_dist(x, mu);
    norm - 3.0 * sigma.ln() - 0.5 * (nu + 3.0) * (r2 / (nu * sigma * sigma)).ln_1p()
}

fn sq_dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (0..3).map(|k| (a[k] - b[k]).powi(2)).sum()
}

/// Value plus partial derivatives with respect to `mu` and `sigma`.
pub(crate) fn logpdf_with_grad(norm: f64, x: &[f64; 3], mu: &[f64; 3], sigma: f64, nu: f64) -> (f64, [f64; 3], f64) {
    let r2 = sq_dist(x, mu);
    let denom = nu * sigma * sigma + r2;
    let value = logpdf_unchecked(norm, x, mu, sigma, nu);
    let c = (nu + 3.0) / denom;
    let d_mu = [c * (x[0] - mu[0]), c * (x[1] - mu[1]), c * (x[2] - mu[2])];
    let d_sigma = -3.0 / sigma + (nu + 3.0) * r2 / (sigma * denom);
    (value, d_mu, d_sigma)
}
