//! Run configuration, read from TOML.
//!
//! Every section is checked by [`RunConfig::validate`] before anything runs.
//! The digest hashes the canonical JSON of the parsed configuration with
//! defaults filled in and the output section removed, so two files that only
//! differ in spelling, key order, omitted defaults or output location share it.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use nalgebra::{Matrix2, Matrix2x4};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analysis::{FitOptions, ReportOptions, Significance, DEFAULT_BOOTSTRAP_ROUNDS, MAX_ESTIMATE_ORDER};
use crate::error::{Error, Result};
use crate::sim::{build_masquerade_state, linear_grid, BackgroundNoise, DemodConfig, PhaseMixingModel};
use crate::state::{
    basis_change, symmetric_covariance, BasisDirection, ComponentLaw, EngineeredLaw, LossyCavity, MeasurementModel,
    StateModel, TwoModeCovariance,
};

/// State under study.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Vacuum {},
    /// Stationary form in the `S`/`A` basis.
    Symmetric { alpha: f64, beta: f64, gamma: f64, delta: f64 },
    /// Full covariance; `sidebands` selects the `(p_+, q_+, p_-, q_-)` basis.
    Covariance {
        rows: [[f64; 4]; 4],
        #[serde(default)]
        sidebands: bool,
    },
    ComponentGaussian {
        s_cos: f64,
        s_sin: f64,
        #[serde(default)]
        c: f64,
    },
    Mixture { weights: Vec<f64>, components: Vec<[[f64; 4]; 4]> },
    /// Non-Gaussian law with the phase-mixed fourth moment of a Gaussian.
    Masquerade {
        s_cos: f64,
        s_sin: f64,
        #[serde(default)]
        c: f64,
    },
    Engineered { cos: ComponentLaw, sin: ComponentLaw },
}

impl StateSpec {
    pub fn to_state(&self) -> Result<StateModel> {
        let state = match self {
            StateSpec::Vacuum {} => StateModel::gaussian(TwoModeCovariance::vacuum()),
            StateSpec::Symmetric {
                alpha,
                beta,
                gamma,
                delta,
            } => StateModel::gaussian(symmetric_covariance(*alpha, *beta, *gamma, *delta)?),
            StateSpec::Covariance { rows, sidebands } => {
                let v = TwoModeCovariance::from_rows(*rows)?;
                let v = if *sidebands {
                    basis_change(BasisDirection::SidebandsToSymmetric, &v)?
                } else {
                    v
                };
                StateModel::gaussian(v)
            }
            StateSpec::ComponentGaussian { s_cos, s_sin, c } => StateModel::component_gaussian(*s_cos, *s_sin, *c)?,
            StateSpec::Mixture { weights, components } => {
                let covs = components
                    .iter()
                    .map(|r| TwoModeCovariance::from_rows(*r))
                    .collect::<Result<Vec<_>>>()?;
                StateModel::mixture(weights.clone(), covs)?
            }
            StateSpec::Masquerade { s_cos, s_sin, c } => build_masquerade_state(*s_cos, *s_sin, *c)?,
            StateSpec::Engineered { cos, sin } => StateModel::Engineered {
                law: EngineeredLaw::independent(*cos, *sin)?,
            },
        };
        state.validate()?;
        Ok(state)
    }
}

fn default_escape_efficiency() -> f64 {
    LossyCavity::default().escape_efficiency
}

fn default_sideband_offset() -> f64 {
    LossyCavity::default().sideband_offset
}

/// Cavity used for resonator detection.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavitySpec {
    #[serde(default = "default_escape_efficiency")]
    pub escape_efficiency: f64,
    /// `Ω` in cavity half-linewidths.
    #[serde(default = "default_sideband_offset")]
    pub sideband_offset: f64,
}

impl Default for CavitySpec {
    fn default() -> Self {
        Self {
            escape_efficiency: default_escape_efficiency(),
            sideband_offset: default_sideband_offset(),
        }
    }
}

impl CavitySpec {
    pub fn profile(&self) -> Result<Arc<LossyCavity>> {
        Ok(Arc::new(LossyCavity::new(self.escape_efficiency, self.sideband_offset)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MeasurementSpec {
    Homodyne {
        #[serde(default)]
        phase: f64,
    },
    Resonator {
        #[serde(default)]
        detuning: f64,
        #[serde(flatten)]
        cavity: CavitySpec,
    },
    Explicit {
        gain: [[f64; 4]; 2],
        #[serde(default)]
        added_noise: [[f64; 2]; 2],
    },
}

impl Default for MeasurementSpec {
    fn default() -> Self {
        MeasurementSpec::Homodyne { phase: 0.0 }
    }
}

impl MeasurementSpec {
    pub fn to_model(&self) -> Result<MeasurementModel> {
        let m = match self {
            MeasurementSpec::Homodyne { phase } => MeasurementModel::homodyne(*phase),
            MeasurementSpec::Resonator { detuning, cavity } => MeasurementModel::resonator(*detuning, cavity.profile()?),
            MeasurementSpec::Explicit { gain, added_noise } => MeasurementModel::Explicit {
                gain: Matrix2x4::from_fn(|i, j| gain[i][j]),
                added_noise: Matrix2::from_fn(|i, j| added_noise[i][j]),
            },
        };
        m.validate()?;
        Ok(m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanTechnique {
    Homodyne,
    Resonator,
}

/// Setting sweep for covariance reconstruction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSpec {
    pub technique: ScanTechnique,
    /// Grid start: LO phase in radians, or detuning in half-linewidths.
    pub start: f64,
    pub stop: f64,
    pub points: usize,
    pub per_point: usize,
    #[serde(default)]
    pub cavity: CavitySpec,
    #[serde(default = "yes")]
    pub reconstruct: bool,
}

impl ScanSpec {
    pub fn grid(&self) -> Vec<f64> {
        linear_grid(self.start, self.stop, self.points)
    }

    fn validate(&self) -> Result<()> {
        if !(self.start.is_finite() && self.stop.is_finite()) {
            return Err(Error::invalid("scan grid bounds must be finite"));
        }
        if self.points == 0 || self.points > u32::MAX as usize {
            return Err(Error::invalid("scan needs between 1 and 2^32 settings"));
        }
        if self.per_point < 2 {
            return Err(Error::invalid("scan needs at least 2 samples per setting"));
        }
        if self.technique == ScanTechnique::Resonator {
            self.cavity.profile()?;
        }
        Ok(())
    }
}

fn yes() -> bool {
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSpec {
    pub count: usize,
    /// Sub-batch length for the batch diagnostics.
    #[serde(default)]
    pub batch_size: Option<usize>,
}

/// Digital demodulation chain between the components and the analysis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DemodSpec {
    #[serde(default = "default_analysis_frequency")]
    pub analysis_frequency: f64,
    #[serde(default = "default_window_length")]
    pub window_length: f64,
    #[serde(default = "default_lowpass_bandwidth")]
    pub lowpass_bandwidth: f64,
    #[serde(default = "default_sample_rate")]
    pub sample_rate: f64,
    /// White background per raw sample; its demodulated variance is removed
    /// from the moments before the verdict.
    #[serde(default)]
    pub background_sd: f64,
}

fn default_analysis_frequency() -> f64 {
    DemodConfig::default().analysis_frequency
}

fn default_window_length() -> f64 {
    DemodConfig::default().window_length
}

fn default_lowpass_bandwidth() -> f64 {
    DemodConfig::default().lowpass_bandwidth
}

fn default_sample_rate() -> f64 {
    DemodConfig::default().sample_rate
}

impl DemodSpec {
    pub fn config(&self) -> DemodConfig {
        DemodConfig {
            analysis_frequency: self.analysis_frequency,
            window_length: self.window_length,
            lowpass_bandwidth: self.lowpass_bandwidth,
            sample_rate: self.sample_rate,
        }
    }

    pub fn background(&self) -> BackgroundNoise {
        if self.background_sd > 0.0 {
            BackgroundNoise::White { sd: self.background_sd }
        } else {
            BackgroundNoise::None
        }
    }

    fn validate(&self) -> Result<()> {
        self.config().validate()?;
        if !(self.background_sd.is_finite() && self.background_sd >= 0.0) {
            return Err(Error::invalid("background standard deviation must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Second beam recorded simultaneously with the first.
///
/// Beam B is `ρ·(s_B/s_A)·I_A + sqrt(1 - ρ²)·I'_B`, where `I'_B` is an
/// independent stream from `state` (beam A's state when omitted) and the
/// scale factors are the two mixed standard deviations. For Gaussian streams
/// this is a correlated Gaussian pair with beam B's marginal variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoBeamSpec {
    pub correlation: f64,
    #[serde(default)]
    pub state: Option<StateSpec>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisSpec {
    #[serde(default = "default_max_order")]
    pub max_order: u32,
    #[serde(default = "default_bootstrap_rounds")]
    pub bootstrap_rounds: usize,
    /// Per-order threshold in standard errors.
    #[serde(default = "default_sigma")]
    pub significance: f64,
    #[serde(default = "yes")]
    pub bonferroni: bool,
    #[serde(default = "yes")]
    pub shapiro: bool,
    #[serde(default = "yes")]
    pub fit: bool,
    #[serde(default = "default_fit_nodes")]
    pub fit_nodes: usize,
    /// Bins of the histogram table.
    #[serde(default = "default_histogram_bins")]
    pub histogram_bins: usize,
}

fn default_max_order() -> u32 {
    MAX_ESTIMATE_ORDER
}

fn default_bootstrap_rounds() -> usize {
    DEFAULT_BOOTSTRAP_ROUNDS
}

fn default_sigma() -> f64 {
    Significance::default().sigma
}

fn default_fit_nodes() -> usize {
    FitOptions::default().nodes
}

fn default_histogram_bins() -> usize {
    80
}

impl Default for AnalysisSpec {
    fn default() -> Self {
        Self {
            max_order: default_max_order(),
            bootstrap_rounds: default_bootstrap_rounds(),
            significance: default_sigma(),
            bonferroni: true,
            shapiro: true,
            fit: true,
            fit_nodes: default_fit_nodes(),
            histogram_bins: default_histogram_bins(),
        }
    }
}

impl AnalysisSpec {
    pub fn significance(&self) -> Significance {
        Significance {
            sigma: self.significance,
            bonferroni: self.bonferroni,
        }
    }

    pub fn report_options(&self, seed: u64, batch_size: Option<usize>) -> ReportOptions {
        ReportOptions {
            max_order: self.max_order,
            bootstrap_rounds: self.bootstrap_rounds,
            seed,
            significance: self.significance(),
            batch_size,
            shapiro: self.shapiro,
        }
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            nodes: self.fit_nodes,
            significance: self.significance(),
            ..FitOptions::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_order < 4 {
            return Err(Error::invalid("max_order must be at least 4"));
        }
        if self.max_order > MAX_ESTIMATE_ORDER {
            return Err(Error::OrderTooHigh {
                order: self.max_order,
                max: MAX_ESTIMATE_ORDER,
            });
        }
        if !(self.significance.is_finite() && self.significance > 0.0) {
            return Err(Error::invalid("significance must be a positive number of standard errors"));
        }
        if self.fit_nodes < 8 || self.fit_nodes % 4 != 0 {
            return Err(Error::invalid("fit_nodes must be a multiple of 4, at least 8"));
        }
        if self.histogram_bins < 2 {
            return Err(Error::invalid("histogram needs at least 2 bins"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Binary,
    Text,
}

/// Where results go. Excluded from the digest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default)]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default = "yes")]
    pub datasets: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: None,
            format: OutputFormat::Binary,
            datasets: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Label carried into the tables, for example a pump-power setting.
    #[serde(default = "default_scenario")]
    pub scenario: String,
    pub state: StateSpec,
    #[serde(default)]
    pub measurement: MeasurementSpec,
    #[serde(default)]
    pub mixing: PhaseMixingModel,
    pub samples: SampleSpec,
    #[serde(default)]
    pub demod: Option<DemodSpec>,
    #[serde(default)]
    pub two_beam: Option<TwoBeamSpec>,
    #[serde(default)]
    pub scan: Option<ScanSpec>,
    #[serde(default)]
    pub analysis: AnalysisSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_scenario() -> String {
    "run".into()
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Builds every model the run will use; nothing is sampled.
    pub fn validate(&self) -> Result<()> {
        if self.scenario.contains(['\t', '\n']) {
            return Err(Error::invalid("scenario label must not contain tabs or newlines"));
        }
        let state = self.state.to_state()?;
        self.measurement.to_model()?;
        self.mixing.validate()?;
        if self.samples.count < 30 {
            return Err(Error::invalid("at least 30 samples are needed"));
        }
        if let Some(b) = self.samples.batch_size {
            if b < 30 || 2 * b > self.samples.count {
                return Err(Error::invalid("batch_size must be at least 30 and fit twice into the sample count"));
            }
        }
        if let Some(d) = &self.demod {
            d.validate()?;
        }
        if let Some(t) = &self.two_beam {
            if !(t.correlation.is_finite() && (-1.0..=1.0).contains(&t.correlation)) {
                return Err(Error::invalid("two-beam correlation must lie in [-1, 1]"));
            }
            if let Some(s) = &t.state {
                s.to_state()?;
            }
        }
        if let Some(scan) = &self.scan {
            scan.validate()?;
            if !state.has_quadratures() {
                return Err(Error::invalid(
                    "a scan needs a quadrature-level state (vacuum, symmetric, covariance or mixture)",
                ));
            }
        }
        self.analysis.validate()
    }

    /// SHA-256 of the canonical JSON form without the output section.
    pub fn digest(&self) -> Result<String> {
        let mut value = serde_json::to_value(self)?;
        if let Some(map) = value.as_object_mut() {
            map.remove("output");
        }
        // serde_json maps are key-sorted, which makes this form canonical.
        let bytes = serde_json::to_vec(&value)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }
}
