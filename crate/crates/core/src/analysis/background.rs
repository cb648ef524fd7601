use super::estimate::MomentEstimates;
use crate::error::{Error, Result};

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, j| acc * (n - j) as f64 / (j + 1) as f64)
}

/// Cumulants `κ_0..κ_max` (with `κ_0 = 0`) from moments `μ_0 = 1, μ_1, ...`.
pub fn moments_to_cumulants(mu: &[f64]) -> Vec<f64> {
    let mut kappa = vec![0.0; mu.len()];
    for n in 1..mu.len() {
        let mut acc = mu[n];
        for m in 1..n {
            acc -= binomial(n - 1, m - 1) * kappa[m] * mu[n - m];
        }
        kappa[n] = acc;
    }
    kappa
}

pub fn cumulants_to_moments(kappa: &[f64]) -> Vec<f64> {
    let mut mu = vec![0.0; kappa.len()];
    mu[0] = 1.0;
    for n in 1..kappa.len() {
        mu[n] = (1..=n).map(|m| binomial(n - 1, m - 1) * kappa[m] * mu[n - m]).sum();
    }
    mu
}

/// Removes independent additive Gaussian background of variance
/// `background_variance`: only the second cumulant changes.
pub fn correct_gaussian_background(moments: &MomentEstimates, background_variance: f64) -> Result<MomentEstimates> {
    let total = moments.value(2).expect("order 2 is always estimated");
    if !(background_variance.is_finite() && background_variance >= 0.0) {
        return Err(Error::invalid("background variance must be finite and >= 0"));
    }
    if background_variance >= total {
        return Err(Error::invalid(format!(
            "background variance {background_variance} is not below the total variance {total}"
        )));
    }
    Ok(moments.map(|mu| {
        let mut kappa = moments_to_cumulants(mu);
        kappa[2] -= background_variance;
        cumulants_to_moments(&kappa)
    }))
}
