use std::fmt;
use std::sync::Arc;

use nalgebra::{Matrix2, Matrix2x4, Matrix4};
use num::complex::Complex64;
use serde::{Deserialize, Serialize};

use super::covariance::TwoModeCovariance;
use crate::error::{Error, Result};
use crate::moments::ComponentStats;

/// Linear response of the two phase-locked components to the four
/// quadratures, plus independent noise that enters the detection (for example
/// vacuum leaking in through resonator losses).
///
/// The component covariance is `gain · V · gainᵀ + added_noise`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ComponentResponse {
    pub gain: Matrix2x4<f64>,
    pub added_noise: Matrix2<f64>,
}

impl ComponentResponse {
    pub fn noiseless(gain: Matrix2x4<f64>) -> Self {
        Self {
            gain,
            added_noise: Matrix2::zeros(),
        }
    }

    pub fn component_covariance(&self, v: &Matrix4<f64>) -> Matrix2<f64> {
        self.gain * v * self.gain.transpose() + self.added_noise
    }

    /// Variance of the phase-mixed photocurrent, `tr(Σ) / 2`.
    pub fn mixed_variance(&self, v: &Matrix4<f64>) -> f64 {
        0.5 * self.component_covariance(v).trace()
    }
}

/// Detuning-dependent response of a resonator detection scheme.
pub trait ResonatorResponse: fmt::Debug + Send + Sync {
    fn response(&self, detuning: f64) -> ComponentResponse;

    /// Structured description recorded in dataset headers.
    fn describe(&self) -> serde_json::Value;
}

/// Adapter for a plain coefficient function `Δ -> 2x4` with no added noise.
pub struct CoefficientFn<F> {
    name: String,
    f: F,
}

impl<F> CoefficientFn<F>
where
    F: Fn(f64) -> Matrix2x4<f64> + Send + Sync,
{
    pub fn new(name: impl Into<String>, f: F) -> Self {
        Self { name: name.into(), f }
    }
}

impl<F> fmt::Debug for CoefficientFn<F> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientFn").field("name", &self.name).finish()
    }
}

impl<F> ResonatorResponse for CoefficientFn<F>
where
    F: Fn(f64) -> Matrix2x4<f64> + Send + Sync,
{
    fn response(&self, detuning: f64) -> ComponentResponse {
        ComponentResponse::noiseless((self.f)(detuning))
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({ "kind": "coefficient_fn", "name": self.name })
    }
}

/// Default resonator profile: reflection off a single-ended cavity with
/// intracavity loss.
///
/// Detunings and the sideband offset are in cavity half-linewidths. The
/// reflection coefficient is `r(x) = 1 - 2η / (1 - i x)` with escape
/// efficiency `η`. The `±Ω` sidebands pick up `r(Δ ± Ω)` relative to the
/// carrier phase `arg r(Δ)`; the loss lets vacuum in, which shows up as
/// `added_noise`. Far from resonance the response tends to amplitude
/// homodyne detection.
///
/// This is an approximate model. Anything that needs the exact resonator
/// coefficients should supply its own [`ResonatorResponse`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossyCavity {
    pub escape_efficiency: f64,
    pub sideband_offset: f64,
}

impl Default for LossyCavity {
    fn default() -> Self {
        // 21 MHz analysis frequency against a ~14 MHz full linewidth
        Self {
            escape_efficiency: 0.9,
            sideband_offset: 3.0,
        }
    }
}

impl LossyCavity {
    pub fn new(escape_efficiency: f64, sideband_offset: f64) -> Result<Self> {
        if !(escape_efficiency > 0.0 && escape_efficiency <= 1.0) {
            return Err(Error::invalid(format!(
                "escape efficiency must lie in (0, 1], got {escape_efficiency}"
            )));
        }
        if !(sideband_offset.is_finite() && sideband_offset > 0.0) {
            return Err(Error::invalid(format!(
                "sideband offset must be positive, got {sideband_offset}"
            )));
        }
        Ok(Self {
            escape_efficiency,
            sideband_offset,
        })
    }

    pub fn reflection(&self, x: f64) -> Complex64 {
        Complex64::new(1.0, 0.0) - 2.0 * self.escape_efficiency / Complex64::new(1.0, -x)
    }
}

impl ResonatorResponse for LossyCavity {
    fn response(&self, detuning: f64) -> ComponentResponse {
        let carrier = self.reflection(detuning);
        let phase = if carrier.norm() > 1e-12 {
            carrier.conj() / carrier.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        let g_up = self.reflection(detuning + self.sideband_offset) * phase;
        let g_down = self.reflection(detuning - self.sideband_offset) * phase;
        let mean = (g_up + g_down) * 0.5;
        let diff = (g_up - g_down) * 0.5;
        let gain = Matrix2x4::new(
            mean.re, -mean.im, diff.re, -diff.im, //
            diff.im, diff.re, mean.im, mean.re,
        );
        let transmitted = 0.5 * (g_up.norm_sqr() + g_down.norm_sqr());
        ComponentResponse {
            gain,
            added_noise: Matrix2::identity() * (1.0 - transmitted).max(0.0),
        }
    }

    fn describe(&self) -> serde_json::Value {
        serde_json::json!({
            "kind": "lossy_cavity",
            "escape_efficiency": self.escape_efficiency,
            "sideband_offset": self.sideband_offset,
        })
    }
}

/// How the four quadratures reach the two phase-locked photocurrent components.
#[derive(Clone, Debug)]
pub enum MeasurementModel {
    /// Homodyne detection at LO phase `phase`: the cosine component reads the
    /// `S` mode, the sine component the `A` mode.
    Homodyne { phase: f64 },
    /// Resonator detection at one detuning.
    Resonator {
        detuning: f64,
        profile: Arc<dyn ResonatorResponse>,
    },
    Explicit {
        gain: Matrix2x4<f64>,
        added_noise: Matrix2<f64>,
    },
}

/// Serializable summary of a [`MeasurementModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum MeasurementDescription {
    Homodyne { phase: f64 },
    Resonator { detuning: f64, profile: serde_json::Value },
    Explicit { gain: [[f64; 4]; 2], added_noise: [[f64; 2]; 2] },
}

pub fn homodyne_gain(phase: f64) -> Matrix2x4<f64> {
    let (s, c) = phase.sin_cos();
    Matrix2x4::new(
        c, s, 0.0, 0.0, //
        0.0, 0.0, -s, c,
    )
}

impl MeasurementModel {
    pub fn homodyne(phase: f64) -> Self {
        MeasurementModel::Homodyne { phase }
    }

    pub fn resonator(detuning: f64, profile: Arc<dyn ResonatorResponse>) -> Self {
        MeasurementModel::Resonator { detuning, profile }
    }

    pub fn explicit(gain: Matrix2x4<f64>) -> Self {
        MeasurementModel::Explicit {
            gain,
            added_noise: Matrix2::zeros(),
        }
    }

    pub fn response(&self) -> ComponentResponse {
        match self {
            MeasurementModel::Homodyne { phase } => ComponentResponse::noiseless(homodyne_gain(*phase)),
            MeasurementModel::Resonator { detuning, profile } => profile.response(*detuning),
            MeasurementModel::Explicit { gain, added_noise } => ComponentResponse {
                gain: *gain,
                added_noise: *added_noise,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.response();
        if r.gain.iter().chain(r.added_noise.iter()).any(|x| !x.is_finite()) {
            return Err(Error::invalid("measurement response has non-finite entries"));
        }
        let n = r.added_noise;
        if (n[(0, 1)] - n[(1, 0)]).abs() > 1e-12 || n[(0, 0)] < 0.0 || n[(1, 1)] < 0.0 || n.determinant() < -1e-12 {
            return Err(Error::invalid("added noise must be a covariance matrix"));
        }
        Ok(())
    }

    pub fn describe(&self) -> MeasurementDescription {
        match self {
            MeasurementModel::Homodyne { phase } => MeasurementDescription::Homodyne { phase: *phase },
            MeasurementModel::Resonator { detuning, profile } => MeasurementDescription::Resonator {
                detuning: *detuning,
                profile: profile.describe(),
            },
            MeasurementModel::Explicit { gain, added_noise } => MeasurementDescription::Explicit {
                gain: std::array::from_fn(|i| std::array::from_fn(|j| gain[(i, j)])),
                added_noise: std::array::from_fn(|i| std::array::from_fn(|j| added_noise[(i, j)])),
            },
        }
    }
}

/// Second-order statistics of `(I_cos, I_sin)` for a Gaussian state, with all
/// higher joint moments filled by Gaussian closure.
pub fn predicted_component_stats(v: &TwoModeCovariance, m: &MeasurementModel) -> Result<ComponentStats> {
    m.validate()?;
    let sigma = m.response().component_covariance(v.matrix());
    ComponentStats::from_covariance(sigma[(0, 0)], sigma[(1, 1)], sigma[(0, 1)], true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::covariance::{symmetric_basis, symmetric_covariance, symplectic_form};

    #[test]
    fn vacuum_homodyne() {
        let s = predicted_component_stats(&TwoModeCovariance::vacuum(), &MeasurementModel::homodyne(0.0)).unwrap();
        assert_eq!((s.s_cos(), s.s_sin(), s.c()), (1.0, 1.0, 0.0));
    }

    #[test]
    fn homodyne_row_extraction() {
        let v = TwoModeCovariance::from_rows([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 4.0, 0.0],
            [0.0, 0.0, 0.0, 4.0],
        ])
        .unwrap();
        let s = predicted_component_stats(&v, &MeasurementModel::homodyne(0.0)).unwrap();
        assert_eq!((s.s_cos(), s.s_sin(), s.c()), (1.0, 2.0, 0.0));
    }

    #[test]
    fn homodyne_rows_touch_disjoint_modes() {
        for phase in [0.0, 0.4, 2.0] {
            let g = homodyne_gain(phase);
            assert_eq!((g[(0, 2)], g[(0, 3)], g[(1, 0)], g[(1, 1)]), (0.0, 0.0, 0.0, 0.0));
        }
    }

    #[test]
    fn symmetric_state_is_stationary_under_homodyne() {
        let v = symmetric_covariance(2.0, 1.0, 0.3, 0.1).unwrap();
        for phase in [0.0, 0.3, 1.2, 2.9] {
            let s = predicted_component_stats(&v, &MeasurementModel::homodyne(phase)).unwrap();
            assert!((s.s_cos() - s.s_sin()).abs() < 1e-14);
            assert!(s.c().abs() < 1e-14);
        }
    }

    #[test]
    fn cavity_preserves_vacuum_and_tends_to_homodyne() {
        let cavity = LossyCavity::default();
        for x in [-6.0, -2.0, -0.5, 0.0, 0.7, 3.0, 9.0] {
            let r = cavity.response(x);
            let sigma = r.component_covariance(&Matrix4::identity());
            assert!((sigma - Matrix2::identity()).abs().max() < 1e-12, "x={x}: {sigma}");
        }
        let far = cavity.response(1e7);
        assert!((far.gain - homodyne_gain(0.0)).abs().max() < 1e-6);
    }

    #[test]
    fn lossless_cavity_keeps_components_commuting() {
        let cavity = LossyCavity::new(1.0, 3.0).unwrap();
        let j = symplectic_form();
        for x in [-4.0, -1.0, 0.0, 0.5, 2.5] {
            let g = cavity.response(x).gain;
            let comm = g.row(0) * j * g.row(1).transpose();
            assert!(comm[(0, 0)].abs() < 1e-12);
        }
    }

    #[test]
    fn lossy_cavity_sees_energy_asymmetry() {
        // the δ entry of the symmetric form reaches the mixed variance only
        // through unequal sideband reflectivities
        let cavity = LossyCavity::default();
        let e_delta = symmetric_basis()[3];
        let reach: f64 = (-40..=40)
            .map(|i| cavity.response(i as f64 * 0.1).mixed_variance(&e_delta).abs())
            .fold(0.0, f64::max);
        assert!(reach > 0.05, "{reach}");
    }

    #[test]
    fn cavity_parameters_validated() {
        assert!(LossyCavity::new(0.0, 3.0).is_err());
        assert!(LossyCavity::new(1.2, 3.0).is_err());
        assert!(LossyCavity::new(0.9, -1.0).is_err());
    }
}
