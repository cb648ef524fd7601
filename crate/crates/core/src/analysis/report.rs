use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, Normal};

use super::estimate::{estimate_moments, standardized, EstimateMethod, MomentEstimate, MomentEstimates, DEFAULT_BOOTSTRAP_ROUNDS, MAX_ESTIMATE_ORDER};
use super::format::format_with_uncertainty;
use super::shapiro::{shapiro_wilk, ShapiroWilk};
use crate::error::{Error, Result};
use crate::moments::gaussian_central_moment;

/// Per-order significance rule for the Gaussianity verdict.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    /// Nominal per-order threshold in standard errors.
    pub sigma: f64,
    /// Spread the two-sided tail probability of `sigma` over all tested orders.
    pub bonferroni: bool,
}

impl Default for Significance {
    fn default() -> Self {
        Self {
            sigma: 3.0,
            bonferroni: true,
        }
    }
}

impl Significance {
    /// |z| threshold when `tested` orders are judged together.
    pub fn threshold(&self, tested: usize) -> f64 {
        if !self.bonferroni || tested <= 1 {
            return self.sigma;
        }
        let normal = Normal::standard();
        let alpha = 2.0 * (1.0 - normal.cdf(self.sigma));
        normal.inverse_cdf(1.0 - alpha / (2.0 * tested as f64))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportOptions {
    pub max_order: u32,
    /// Zero selects influence-function errors instead of the bootstrap.
    pub bootstrap_rounds: usize,
    pub seed: u64,
    pub significance: Significance,
    /// Sub-batch length for the batch diagnostics; `None` disables them.
    pub batch_size: Option<usize>,
    pub shapiro: bool,
}

impl Default for ReportOptions {
    fn default() -> Self {
        Self {
            max_order: MAX_ESTIMATE_ORDER,
            bootstrap_rounds: DEFAULT_BOOTSTRAP_ROUNDS,
            seed: 0,
            significance: Significance::default(),
            batch_size: None,
            shapiro: true,
        }
    }
}

/// `σ^order / s^order` with its Gaussian reference and verdict.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioEstimate {
    pub order: u32,
    pub value: f64,
    pub std_error: f64,
    pub reference: f64,
    pub z: f64,
    pub pass: bool,
    pub formatted: String,
}

/// Mean-over-batches aggregate of consecutive sub-batches, reported apart from the
/// main estimates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BatchDiagnostics {
    pub batch_size: usize,
    pub n_batches: usize,
    /// Mean over batches of the per-batch kurtosis ratio.
    pub k_mean: f64,
    /// Spread of the per-batch ratios divided by `sqrt(n_batches)`.
    pub k_std_error: f64,
    pub k_formatted: String,
    /// `Σ_b (mean_b - mean)² / (var_b / n_b)`; large values flag a drifting mean.
    pub mean_drift_chi2: f64,
    pub mean_drift_dof: usize,
    pub mean_drift_p_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GaussianityReport {
    pub n_samples: usize,
    pub mean: f64,
    pub variance: MomentEstimate,
    pub method: EstimateMethod,
    pub bootstrap_rounds: usize,
    pub seed: u64,
    /// `σ³/s³`, reference 0.
    pub d: RatioEstimate,
    /// `σ⁴/s⁴`, reference 3.
    pub k: RatioEstimate,
    /// Even orders `4, 6, ..., max_order`.
    pub ratios: Vec<RatioEstimate>,
    pub significance: Significance,
    pub threshold_z: f64,
    /// Verdict over the even-order family.
    pub all_pass: bool,
    pub w_test: Option<ShapiroWilk>,
    pub batches: Option<BatchDiagnostics>,
}

impl GaussianityReport {
    pub fn ratio(&self, order: u32) -> Option<&RatioEstimate> {
        self.ratios.iter().find(|r| r.order == order)
    }
}

fn ratio_estimate(order: u32, (value, std_error): (f64, f64), reference: f64, threshold: f64) -> RatioEstimate {
    let z = if std_error > 0.0 {
        (value - reference) / std_error
    } else if value == reference {
        0.0
    } else {
        f64::INFINITY.copysign(value - reference)
    };
    RatioEstimate {
        order,
        value,
        std_error,
        reference,
        z,
        pass: z.abs() <= threshold,
        formatted: format_with_uncertainty(value, std_error),
    }
}

/// Ratios and verdicts from already estimated moments (for example after
/// background correction).
pub fn report_from_moments(moments: &MomentEstimates, significance: Significance) -> Result<GaussianityReport> {
    let max = moments.max_order();
    if max < 4 {
        return Err(Error::invalid("the Gaussianity report needs moments up to order 4 at least"));
    }
    let variance = moments.get(2).expect("order 2 is always estimated").clone();
    if variance.value <= 0.0 {
        return Err(Error::ZeroVariance);
    }
    let even: Vec<u32> = (4..=max).step_by(2).collect();
    let threshold = significance.threshold(even.len());
    let propagated = moments.propagate(|m| {
        let mut out = vec![standardized(m, 3)];
        out.extend(even.iter().map(|&k| standardized(m, k as usize)));
        out
    });
    let d = ratio_estimate(3, propagated[0], 0.0, threshold);
    let ratios: Vec<RatioEstimate> = even
        .iter()
        .zip(&propagated[1..])
        .map(|(&k, &p)| {
            let reference = gaussian_central_moment(k / 2, 1.0).expect("unit scale");
            ratio_estimate(k, p, reference, threshold)
        })
        .collect();
    Ok(GaussianityReport {
        n_samples: moments.n_samples,
        mean: moments.mean,
        variance,
        method: moments.method,
        bootstrap_rounds: moments.bootstrap_rounds,
        seed: moments.seed,
        d,
        k: ratios[0].clone(),
        all_pass: ratios.iter().all(|r| r.pass),
        ratios,
        significance,
        threshold_z: threshold,
        w_test: None,
        batches: None,
    })
}

pub fn gaussianity_report(samples: &[f64], options: &ReportOptions) -> Result<GaussianityReport> {
    let moments = estimate_moments(samples, options.max_order, options.bootstrap_rounds, options.seed)?;
    let mut report = report_from_moments(&moments, options.significance)?;
    if options.shapiro {
        report.w_test = Some(shapiro_wilk(samples, options.seed)?);
    }
    if let Some(size) = options.batch_size {
        report.batches = batch_diagnostics(samples, size)?;
    }
    Ok(report)
}

/// `None` when fewer than two full batches fit.
pub fn batch_diagnostics(samples: &[f64], batch_size: usize) -> Result<Option<BatchDiagnostics>> {
    if batch_size < 30 {
        return Err(Error::invalid("batch size must be at least 30"));
    }
    let n_batches = samples.len() / batch_size;
    if n_batches < 2 {
        return Ok(None);
    }
    let used = &samples[..n_batches * batch_size];
    let grand_mean = used.iter().sum::<f64>() / used.len() as f64;
    let mut ks = Vec::with_capacity(n_batches);
    let mut chi2 = 0.0;
    for batch in used.chunks_exact(batch_size) {
        let n = batch.len() as f64;
        let mean = batch.iter().sum::<f64>() / n;
        let m2 = batch.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        let m4 = batch.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / n;
        if m2 <= 0.0 {
            return Err(Error::ZeroVariance);
        }
        ks.push(m4 / (m2 * m2));
        chi2 += (mean - grand_mean).powi(2) / (m2 / n);
    }
    let b = n_batches as f64;
    let k_mean = ks.iter().sum::<f64>() / b;
    let k_std_error = (ks.iter().map(|k| (k - k_mean).powi(2)).sum::<f64>() / (b - 1.0)).sqrt() / b.sqrt();
    let dof = n_batches - 1;
    let p = 1.0 - ChiSquared::new(dof as f64).expect("dof >= 1").cdf(chi2);
    Ok(Some(BatchDiagnostics {
        batch_size,
        n_batches,
        k_mean,
        k_std_error,
        k_formatted: format_with_uncertainty(k_mean, k_std_error),
        mean_drift_chi2: chi2,
        mean_drift_dof: dof,
        mean_drift_p_value: p,
    }))
}
