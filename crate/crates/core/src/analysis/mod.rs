//! Statistical analysis of phase-mixed photocurrent samples.

mod asymmetry;
mod background;
mod combine;
mod estimate;
mod fit;
mod format;
mod reconstruct;
mod report;
mod shapiro;

pub use asymmetry::{infer_asymmetry, AsymmetryEstimate};
pub use background::{correct_gaussian_background, cumulants_to_moments, moments_to_cumulants};
pub use combine::{combine_two_beams, CombineSign};
pub use estimate::{
    estimate_moments, standardized, EstimateMethod, MomentEstimate, MomentEstimates, DEFAULT_BOOTSTRAP_ROUNDS,
    MAX_ESTIMATE_ORDER,
};
pub use fit::{fit_phase_mixed_gaussian, FitOptions, GoodnessOfFit, MixedGaussianFit};
pub use format::format_with_uncertainty;
pub use reconstruct::{reconstruct_symmetric_covariance, ParameterEstimate, Reconstruction};
pub use report::{
    batch_diagnostics, gaussianity_report, report_from_moments, BatchDiagnostics, GaussianityReport, RatioEstimate,
    ReportOptions, Significance,
};
pub use shapiro::{shapiro_wilk, ShapiroWilk, SHAPIRO_MAX_N};
