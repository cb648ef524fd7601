use serde::{Deserialize, Serialize};

use super::report::GaussianityReport;

/// `|s_cos² - s_sin²|` inferred from the fourth moment under the assumption
/// of a Gaussian state with uncorrelated components.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AsymmetryEstimate {
    /// `δ = (k - 3) s⁴`.
    pub delta: f64,
    pub delta_std_error: f64,
    /// `sqrt((8/3) δ)`, zero when `δ <= 0`.
    pub asymmetry: f64,
    pub asymmetry_std_error: f64,
    /// False when δ is negative beyond the report's threshold: a Gaussian
    /// state cannot produce it.
    pub consistent_with_gaussian_state: bool,
}

pub fn infer_asymmetry(report: &GaussianityReport, s: f64) -> AsymmetryEstimate {
    let s4 = s.powi(4);
    let delta = (report.k.value - 3.0) * s4;
    let delta_std_error = report.k.std_error * s4;
    let consistent = delta >= -report.threshold_z * delta_std_error;
    let (asymmetry, asymmetry_std_error) = if delta > 0.0 {
        let a = (8.0 / 3.0 * delta).sqrt();
        (a, 4.0 / 3.0 * delta_std_error / a)
    } else {
        (0.0, (8.0 / 3.0 * delta_std_error).sqrt())
    };
    AsymmetryEstimate {
        delta,
        delta_std_error,
        asymmetry,
        asymmetry_std_error,
        consistent_with_gaussian_state: consistent,
    }
}
