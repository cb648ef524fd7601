//! Least-squares recovery of the symmetric covariance parameters from the
//! per-setting variances of a scan.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::estimate::estimate_moments;
use crate::error::{Error, Result};
use crate::io::{Dataset, Technique};
use crate::sim::rng::derive_seed;
use crate::state::{symmetric_basis, MeasurementModel, ResonatorResponse, SymmetricCovariance};

const PARAMETER_NAMES: [&str; 4] = ["alpha", "beta", "gamma", "delta"];
/// Singular values below this fraction of the largest count as zero.
const RANK_RTOL: f64 = 1e-9;
/// Refits with errors taken from the fitted variances.
const REWEIGHT_PASSES: usize = 3;

struct Solved {
    solution: DVector<f64>,
    cov: DMatrix<f64>,
    /// Right singular vectors with negligible singular values.
    null: Vec<DVector<f64>>,
    singular_values: Vec<f64>,
    chi2: f64,
}

/// Minimum-norm solution of `design·θ ≈ target` with per-row errors, through
/// the SVD of the whitened system.
fn weighted_solve(design: &DMatrix<f64>, target: &DVector<f64>, errors: &DVector<f64>) -> Solved {
    let a = DMatrix::from_fn(design.nrows(), design.ncols(), |i, j| design[(i, j)] / errors[i]);
    let y = target.component_div(errors);
    let svd = a.clone().svd(true, true);
    let u = svd.u.as_ref().expect("requested");
    let vt = svd.v_t.as_ref().expect("requested");
    let s_max = svd.singular_values.max();
    let mut null = Vec::new();
    let mut solution = DVector::zeros(design.ncols());
    let mut cov = DMatrix::zeros(design.ncols(), design.ncols());
    for k in 0..svd.singular_values.len() {
        let s = svd.singular_values[k];
        let v = vt.row(k).transpose();
        if s <= RANK_RTOL * s_max {
            null.push(v);
            continue;
        }
        solution += &v * (u.column(k).dot(&y) / s);
        cov += &v * v.transpose() / (s * s);
    }
    let chi2 = (&a * &solution - &y).norm_squared();
    Solved {
        solution,
        cov,
        null,
        singular_values: svd.singular_values.iter().copied().collect(),
        chi2,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParameterEstimate {
    pub name: String,
    /// `None` when the scan cannot reach the parameter.
    pub value: Option<f64>,
    pub std_error: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reconstruction {
    pub technique: Technique,
    pub parameters: Vec<ParameterEstimate>,
    /// Parameter covariance of the fit; rows of inaccessible parameters are 0.
    pub covariance: [[f64; 4]; 4],
    pub n_settings: usize,
    pub chi2: f64,
    pub dof: usize,
    pub reduced_chi2: f64,
    pub singular_values: Vec<f64>,
    /// Physicality of the recovered matrix, when all four parameters are known.
    pub physical: Option<bool>,
}

impl Reconstruction {
    pub fn parameter(&self, name: &str) -> Option<&ParameterEstimate> {
        self.parameters.iter().find(|p| p.name == name)
    }

    /// The recovered covariance when every parameter is accessible.
    pub fn symmetric(&self) -> Option<SymmetricCovariance> {
        let v: Option<Vec<f64>> = self.parameters.iter().map(|p| p.value).collect();
        v.map(|v| SymmetricCovariance::new(v[0], v[1], v[2], v[3]))
    }
}

/// Fits `var_i = Σ_j θ_j ½tr(G_i E_j G_iᵀ) + ½tr(N_i)` over the scan's
/// settings with `θ = (α, β, γ, δ)`. Each setting is weighted by its
/// bootstrap relative variance error applied to the fitted variance.
///
/// Homodyne scans cannot see `δ`; it is reported as inaccessible. Any other
/// unresolved direction is an error.
pub fn reconstruct_symmetric_covariance(
    scan: &Dataset,
    profile: Option<&dyn ResonatorResponse>,
    bootstrap_rounds: usize,
    seed: u64,
) -> Result<Reconstruction> {
    let technique = scan.header.technique;
    let model_at = |setting: f64| -> Result<MeasurementModel> {
        match technique {
            Technique::Homodyne => Ok(MeasurementModel::homodyne(setting)),
            Technique::Resonator => {
                let p = profile.ok_or_else(|| Error::invalid("a resonator scan needs its response profile"))?;
                let r = p.response(setting);
                Ok(MeasurementModel::Explicit {
                    gain: r.gain,
                    added_noise: r.added_noise,
                })
            }
            other => Err(Error::invalid(format!("cannot reconstruct from a {other:?} dataset"))),
        }
    };
    let expected_null: Vec<usize> = match technique {
        Technique::Homodyne => vec![3],
        _ => vec![],
    };

    let basis = symmetric_basis();
    let n = scan.header.settings.len();
    let mut design = DMatrix::zeros(n, 4);
    let mut target = DVector::zeros(n);
    let mut observed_error = DVector::zeros(n);
    let mut relative_error = DVector::zeros(n);
    let mut offset = DVector::zeros(n);
    for (i, (setting, group)) in scan.groups().enumerate() {
        let response = model_at(setting)?.response();
        let est = estimate_moments(group, 2, bootstrap_rounds, derive_seed(seed, "reconstruct", i as u64))?;
        let var = est.get(2).expect("order 2");
        if var.std_error <= 0.0 || var.value <= 0.0 {
            return Err(Error::Degenerate(format!("setting {i} has a zero variance or variance error")));
        }
        // unbiased variance; the moment estimator divides by n
        let unbias = group.len() as f64 / (group.len() as f64 - 1.0);
        for (j, e) in basis.iter().enumerate() {
            design[(i, j)] = 0.5 * (response.gain * e * response.gain.transpose()).trace();
        }
        offset[i] = 0.5 * response.added_noise.trace();
        target[i] = var.value * unbias - offset[i];
        observed_error[i] = var.std_error * unbias;
        relative_error[i] = var.std_error / var.value;
    }

    // Weights from each setting's own variance favour settings that happened
    // to fluctuate low. After a first pass each error is rebuilt from the
    // fitted variance times the setting's relative error.
    let mut fit = weighted_solve(&design, &target, &observed_error);
    for _ in 0..REWEIGHT_PASSES {
        let predicted = &design * &fit.solution;
        let errors = DVector::from_fn(n, |i, _| {
            let level = predicted[i] + offset[i];
            if level > 0.0 {
                relative_error[i] * level
            } else {
                observed_error[i]
            }
        });
        fit = weighted_solve(&design, &target, &errors);
    }
    let Solved {
        solution,
        cov,
        null,
        singular_values,
        chi2,
    } = fit;
    let unexpected: Vec<[f64; 4]> = null
        .iter()
        .filter(|v| {
            let inside: f64 = expected_null.iter().map(|&j| v[j] * v[j]).sum();
            inside < 1.0 - 1e-9
        })
        .map(|v| [v[0], v[1], v[2], v[3]])
        .collect();
    if !unexpected.is_empty() || null.len() > expected_null.len() {
        let unresolved = if unexpected.is_empty() {
            null.iter().map(|v| [v[0], v[1], v[2], v[3]]).collect()
        } else {
            unexpected
        };
        return Err(Error::RankDeficient { unresolved });
    }

    let accessible: Vec<bool> = (0..4).map(|j| null.iter().all(|v| v[j].abs() < 1e-9)).collect();
    let rank = 4 - null.len();
    let dof = n.saturating_sub(rank);
    let parameters = (0..4)
        .map(|j| ParameterEstimate {
            name: PARAMETER_NAMES[j].to_string(),
            value: accessible[j].then(|| solution[j]),
            std_error: accessible[j].then(|| cov[(j, j)].max(0.0).sqrt()),
        })
        .collect::<Vec<_>>();
    let covariance = std::array::from_fn(|i| {
        std::array::from_fn(|j| if accessible[i] && accessible[j] { cov[(i, j)] } else { 0.0 })
    });
    let mut out = Reconstruction {
        technique,
        parameters,
        covariance,
        n_settings: n,
        chi2,
        dof,
        reduced_chi2: if dof > 0 { chi2 / dof as f64 } else { f64::NAN },
        singular_values,
        physical: None,
    };
    out.physical = out
        .symmetric()
        .map(|s| crate::state::validate_covariance(&s.matrix()).map(|r| r.physical))
        .transpose()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{detuning_scan, linear_grid, phase_scan, PhaseMixingModel};
    use crate::state::{LossyCavity, StateModel, TwoModeCovariance};

    #[test]
    fn vacuum_homodyne_scan() {
        let ds = phase_scan(
            &StateModel::gaussian(TwoModeCovariance::vacuum()),
            &linear_grid(0.0, 3.0, 40),
            2000,
            &PhaseMixingModel::UniformPerSample {},
            3,
        )
        .unwrap();
        let r = reconstruct_symmetric_covariance(&ds, None, 50, 0).unwrap();
        for (name, want) in [("alpha", 1.0), ("beta", 1.0), ("gamma", 0.0)] {
            let p = r.parameter(name).unwrap();
            assert!((p.value.unwrap() - want).abs() < 4.0 * p.std_error.unwrap(), "{p:?}");
        }
        assert_eq!(r.parameter("delta").unwrap().value, None);
    }

    #[test]
    fn single_phase_is_rank_deficient() {
        let ds = phase_scan(
            &StateModel::gaussian(TwoModeCovariance::vacuum()),
            &[0.3; 5],
            200,
            &PhaseMixingModel::UniformPerSample {},
            3,
        )
        .unwrap();
        match reconstruct_symmetric_covariance(&ds, None, 20, 0) {
            Err(Error::RankDeficient { unresolved }) => assert!(!unresolved.is_empty()),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn resonator_scan_needs_profile() {
        let cavity = LossyCavity::default();
        let ds = detuning_scan(
            &StateModel::gaussian(TwoModeCovariance::vacuum()),
            std::sync::Arc::new(cavity),
            &linear_grid(-4.0, 4.0, 30),
            500,
            &PhaseMixingModel::UniformPerSample {},
            3,
        )
        .unwrap();
        assert!(reconstruct_symmetric_covariance(&ds, None, 20, 0).is_err());
        let r = reconstruct_symmetric_covariance(&ds, Some(&cavity), 20, 0).unwrap();
        assert!(r.parameters.iter().all(|p| p.value.is_some()));
    }
}
