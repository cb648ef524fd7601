use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::covariance::TwoModeCovariance;
use super::measurement::{predicted_component_stats, MeasurementModel};
use crate::error::{Error, Result};
use crate::moments::{isserlis_moment, ComponentStats, MAX_JOINT_ORDER};

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Zero-mean law of one photocurrent component.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ComponentLaw {
    Gaussian { sd: f64 },
    /// `U(-half_width, half_width) + N(0, gaussian_sd²)`, independent terms.
    UniformPlusGaussian { half_width: f64, gaussian_sd: f64 },
}

impl ComponentLaw {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            ComponentLaw::Gaussian { sd } => sd.is_finite() && sd >= 0.0,
            ComponentLaw::UniformPlusGaussian { half_width, gaussian_sd } => {
                half_width.is_finite() && half_width >= 0.0 && gaussian_sd.is_finite() && gaussian_sd >= 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("component law parameters must be finite and >= 0: {self:?}")))
        }
    }

    /// `E[X^k]`, exact.
    pub fn moment(&self, k: u32) -> f64 {
        if k % 2 == 1 {
            return 0.0;
        }
        match *self {
            ComponentLaw::Gaussian { sd } => isserlis_moment(k, 0, sd, 1.0, 0.0),
            ComponentLaw::UniformPlusGaussian { half_width, gaussian_sd } => {
                // binomial expansion over independent even moments
                let mut total = 0.0;
                let mut binom = 1.0;
                for j in 0..=k {
                    if j % 2 == 0 {
                        let u = half_width.powi(j as i32) / (j as f64 + 1.0);
                        let g = isserlis_moment(k - j, 0, gaussian_sd, 1.0, 0.0);
                        total += binom * u * g;
                    }
                    binom = binom * (k - j) as f64 / (j + 1) as f64;
                }
                total
            }
        }
    }

    pub fn variance(&self) -> f64 {
        self.moment(2)
    }
}

/// Independent laws for `I_cos` and `I_sin`, sampled directly at the
/// component level, with the joint moments they imply.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EngineeredLawSpec", into = "EngineeredLawSpec")]
pub struct EngineeredLaw {
    cos: ComponentLaw,
    sin: ComponentLaw,
    declared: ComponentStats,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EngineeredLawSpec {
    cos: ComponentLaw,
    sin: ComponentLaw,
}

impl TryFrom<EngineeredLawSpec> for EngineeredLaw {
    type Error = Error;

    fn try_from(spec: EngineeredLawSpec) -> Result<Self> {
        EngineeredLaw::independent(spec.cos, spec.sin)
    }
}

impl From<EngineeredLaw> for EngineeredLawSpec {
    fn from(law: EngineeredLaw) -> Self {
        EngineeredLawSpec {
            cos: law.cos,
            sin: law.sin,
        }
    }
}

impl EngineeredLaw {
    /// Declares every joint moment up to total order [`MAX_JOINT_ORDER`].
    pub fn independent(cos: ComponentLaw, sin: ComponentLaw) -> Result<Self> {
        cos.validate()?;
        sin.validate()?;
        let mut table = BTreeMap::new();
        for a in 0..=MAX_JOINT_ORDER {
            for b in 0..=MAX_JOINT_ORDER - a {
                table.insert((a, b), cos.moment(a) * sin.moment(b));
            }
        }
        let declared = ComponentStats::with_moments(cos.variance().sqrt(), sin.variance().sqrt(), 0.0, table)?;
        Ok(Self { cos, sin, declared })
    }

    pub fn cos_law(&self) -> &ComponentLaw {
        &self.cos
    }

    pub fn sin_law(&self) -> &ComponentLaw {
        &self.sin
    }

    pub fn declared(&self) -> &ComponentStats {
        &self.declared
    }
}

/// A two-mode state, or a component-level law standing in for one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StateModel {
    Gaussian { covariance: TwoModeCovariance },
    /// Gaussian components given directly, bypassing the quadrature stage.
    ComponentGaussian { stats: ComponentStats },
    GaussianMixture { weights: Vec<f64>, components: Vec<TwoModeCovariance> },
    Engineered { law: EngineeredLaw },
}

impl StateModel {
    pub fn gaussian(covariance: TwoModeCovariance) -> Self {
        StateModel::Gaussian { covariance }
    }

    pub fn component_gaussian(s_cos: f64, s_sin: f64, c: f64) -> Result<Self> {
        Ok(StateModel::ComponentGaussian {
            stats: ComponentStats::gaussian(s_cos, s_sin, c)?,
        })
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<TwoModeCovariance>) -> Result<Self> {
        let state = StateModel::GaussianMixture { weights, components };
        state.validate()?;
        Ok(state)
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            StateModel::Gaussian { covariance } => {
                let report = covariance.report();
                if !report.physical {
                    return Err(Error::Unphysical(Box::new(report)));
                }
            }
            StateModel::ComponentGaussian { stats } => {
                if !stats.is_gaussian() {
                    return Err(Error::invalid("component-Gaussian state needs Gaussian-flagged statistics"));
                }
                ComponentStats::gaussian(stats.s_cos(), stats.s_sin(), stats.c())?;
            }
            StateModel::GaussianMixture { weights, components } => {
                if weights.is_empty() || weights.len() != components.len() {
                    return Err(Error::invalid(format!(
                        "mixture needs one weight per component, got {} weights and {} components",
                        weights.len(),
                        components.len()
                    )));
                }
                if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
                    return Err(Error::invalid("mixture weights must be finite and nonnegative"));
                }
                let sum: f64 = weights.iter().sum();
                if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
                    return Err(Error::invalid(format!("mixture weights sum to {sum}, not 1")));
                }
                for v in components {
                    let report = v.report();
                    if !report.physical {
                        return Err(Error::Unphysical(Box::new(report)));
                    }
                }
            }
            StateModel::Engineered { .. } => {}
        }
        Ok(())
    }

    /// Whether the state is described at the quadrature level, so that the
    /// measurement model matters.
    pub fn has_quadratures(&self) -> bool {
        matches!(self, StateModel::Gaussian { .. } | StateModel::GaussianMixture { .. })
    }

    /// Second moment of the quadratures; `None` for component-level states.
    pub fn covariance(&self) -> Option<nalgebra::Matrix4<f64>> {
        match self {
            StateModel::Gaussian { covariance } => Some(*covariance.matrix()),
            StateModel::GaussianMixture { weights, components } => Some(
                weights
                    .iter()
                    .zip(components)
                    .fold(nalgebra::Matrix4::zeros(), |acc, (w, v)| acc + v.matrix() * *w),
            ),
            _ => None,
        }
    }

    /// Exact component statistics under measurement `m`. Component-level
    /// states ignore `m`.
    pub fn component_stats(&self, m: &MeasurementModel) -> Result<ComponentStats> {
        self.validate()?;
        match self {
            StateModel::Gaussian { covariance } => predicted_component_stats(covariance, m),
            StateModel::ComponentGaussian { stats } => Ok(stats.clone()),
            StateModel::Engineered { law } => Ok(law.declared().clone()),
            StateModel::GaussianMixture { weights, components } => {
                m.validate()?;
                let response = m.response();
                let sigmas: Vec<_> = components
                    .iter()
                    .map(|v| response.component_covariance(v.matrix()))
                    .collect();
                let total = weights
                    .iter()
                    .zip(&sigmas)
                    .fold(nalgebra::Matrix2::zeros(), |acc, (w, s)| acc + s * *w);
                let (s_cos, s_sin) = (total[(0, 0)].max(0.0).sqrt(), total[(1, 1)].max(0.0).sqrt());
                let c = if s_cos * s_sin > 0.0 {
                    (total[(0, 1)] / (s_cos * s_sin)).clamp(-1.0, 1.0)
                } else {
                    0.0
                };
                let mut table = BTreeMap::new();
                for a in 0..=MAX_JOINT_ORDER {
                    for b in 0..=MAX_JOINT_ORDER - a {
                        let value = weights
                            .iter()
                            .zip(&sigmas)
                            .map(|(w, s)| {
                                let (sx, sy) = (s[(0, 0)].max(0.0).sqrt(), s[(1, 1)].max(0.0).sqrt());
                                let rho = if sx * sy > 0.0 { (s[(0, 1)] / (sx * sy)).clamp(-1.0, 1.0) } else { 0.0 };
                                w * isserlis_moment(a, b, sx, sy, rho)
                            })
                            .sum::<f64>();
                        table.insert((a, b), value);
                    }
                }
                // second-order entries come from the summed covariance so that
                // they agree with (s_cos, s_sin, c) to rounding
                table.insert((2, 0), s_cos * s_cos);
                table.insert((0, 2), s_sin * s_sin);
                table.insert((1, 1), c * s_cos * s_sin);
                ComponentStats::with_moments(s_cos, s_sin, c, table)
            }
        }
    }
}
