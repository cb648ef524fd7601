//! simulate → optional demodulation → analyze → report, driven by a
//! [`RunConfig`].
//!
//! Stages run in order; each draws its randomness from a stream derived from
//! the master seed and a fixed purpose label, so the outputs are a function of
//! the configuration alone. A failing stage still leaves a `report.json`
//! marked incomplete when an output directory is set.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::config::{OutputFormat, RunConfig, ScanTechnique};
use super::dataset::{write_dataset, write_dataset_text, Dataset, DatasetHeader, SettingAxis, Technique};
use super::tables::{
    histogram_table, moment_ratio_table, noise_table, stream_summary_table, table_preamble, NoiseRow,
};
use crate::analysis::{
    batch_diagnostics, combine_two_beams, correct_gaussian_background, estimate_moments, fit_phase_mixed_gaussian,
    infer_asymmetry, reconstruct_symmetric_covariance, report_from_moments, shapiro_wilk, AsymmetryEstimate,
    CombineSign, FitOptions, GaussianityReport, MixedGaussianFit, Reconstruction, ReportOptions,
};
use crate::error::{Error, Result};
use crate::sim::rng::derive_seed;
use crate::sim::{detuning_scan, phase_mix, phase_scan, sample_components, synthesize_and_demodulate, Demodulator};
use crate::state::{LossyCavity, MeasurementModel, StateModel};

pub const REPORT_FORMAT: &str = "phasemix-report";
pub const REPORT_VERSION: u32 = 1;

pub const BEAM_A: &str = "beam-a";
pub const BEAM_B: &str = "beam-b";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamReport {
    pub label: String,
    /// Gaussian background removed from the moments before the verdict.
    pub background_variance: Option<f64>,
    pub gaussianity: GaussianityReport,
    pub asymmetry: AsymmetryEstimate,
    pub fit: Option<MixedGaussianFit>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub technique: Technique,
    pub axis: SettingAxis,
    pub n_settings: usize,
    pub per_point: usize,
    pub records: u64,
    pub reconstruction: Option<Reconstruction>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub pass: bool,
    /// Streams whose Gaussianity check failed.
    pub failed_streams: Vec<String>,
}

/// Everything a pipeline run produced, serialized as `report.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub format: String,
    pub version: u32,
    pub scenario: String,
    pub seed: u64,
    pub config_digest: String,
    pub complete: bool,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    /// The configuration with its output section cleared.
    pub config: RunConfig,
    pub beams: Vec<StreamReport>,
    pub combinations: Vec<StreamReport>,
    pub scan: Option<ScanReport>,
    pub verdict: Option<Verdict>,
}

impl ReportBundle {
    fn new(config: &RunConfig, digest: String) -> Self {
        let mut config = config.clone();
        config.output = Default::default();
        Self {
            format: REPORT_FORMAT.into(),
            version: REPORT_VERSION,
            scenario: config.scenario.clone(),
            seed: config.seed,
            config_digest: digest,
            complete: false,
            failed_stage: None,
            error: None,
            config,
            beams: Vec::new(),
            combinations: Vec::new(),
            scan: None,
            verdict: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.verdict.as_ref().is_some_and(|v| v.pass)
    }
}

/// Result of [`run_pipeline`]: the bundle and every file written.
#[derive(Clone, Debug)]
pub struct PipelineRun {
    pub bundle: ReportBundle,
    pub files: Vec<PathBuf>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

fn technique_of(state: &StateModel, m: &MeasurementModel) -> (Technique, f64) {
    if !state.has_quadratures() {
        return (Technique::Component, 0.0);
    }
    match m {
        MeasurementModel::Homodyne { phase } => (Technique::Homodyne, *phase),
        MeasurementModel::Resonator { detuning, .. } => (Technique::Resonator, *detuning),
        MeasurementModel::Explicit { .. } => (Technique::Explicit, 0.0),
    }
}

/// One simulated stream before it is packed into a dataset.
struct Stream {
    values: Vec<f64>,
    background: Option<f64>,
    /// Standard deviation of the signal alone.
    signal_sd: f64,
}

fn simulate_stream(cfg: &RunConfig, state: &StateModel, m: &MeasurementModel, index: u64) -> Result<Stream> {
    let n = cfg.samples.count;
    let mut pairs = sample_components(state, m, n, derive_seed(cfg.seed, "beam", index))?;
    let mut background = None;
    if let Some(d) = &cfg.demod {
        let noise = d.background();
        pairs = synthesize_and_demodulate(&pairs, &d.config(), &noise, derive_seed(cfg.seed, "demod", index))?;
        let [vc, vs] = Demodulator::new(d.config())?.background_variance(&noise);
        // Phase mixing averages the two component backgrounds.
        background = (vc + vs > 0.0).then_some(0.5 * (vc + vs));
    }
    let values = phase_mix(&pairs, &cfg.mixing, derive_seed(cfg.seed, "mixing", index))?;
    let signal_sd = state.component_stats(m)?.mixed_std();
    Ok(Stream {
        values,
        background,
        signal_sd,
    })
}

fn beam_dataset(cfg: &RunConfig, digest: &str, label: &str, state: &StateModel, m: &MeasurementModel, stream: &Stream) -> Result<Dataset> {
    let (technique, setting) = technique_of(state, m);
    let mut header = DatasetHeader::new(label, technique, SettingAxis::Fixed, cfg.seed);
    header.state = Some(serde_json::to_value(state)?);
    header.measurements = vec![m.describe()];
    header.mixing = Some(cfg.mixing);
    if let Some(d) = &cfg.demod {
        let demod = Demodulator::new(d.config())?;
        header.demod = Some(d.config());
        header.filter_taps = Some(demod.filter().taps().to_vec());
    }
    header.background_variance = stream.background;
    header.config_digest = Some(digest.to_string());
    Dataset::from_groups(header, vec![(setting, stream.values.clone())])
}

/// Beam A and, when configured, the correlated beam B, as fixed-setting
/// datasets. Validates the configuration first.
pub fn simulate_beams(cfg: &RunConfig) -> Result<Vec<Dataset>> {
    cfg.validate()?;
    let digest = cfg.digest()?;
    let state = cfg.state.to_state()?;
    let m = cfg.measurement.to_model()?;
    let a = simulate_stream(cfg, &state, &m, 0)?;
    let mut out = vec![beam_dataset(cfg, &digest, BEAM_A, &state, &m, &a)?];
    if let Some(tb) = &cfg.two_beam {
        let state_b = match &tb.state {
            Some(s) => s.to_state()?,
            None => state.clone(),
        };
        let b_own = simulate_stream(cfg, &state_b, &m, 1)?;
        let rho = tb.correlation;
        let scale = if a.signal_sd > 0.0 { rho * b_own.signal_sd / a.signal_sd } else { 0.0 };
        let rest = (1.0 - rho * rho).max(0.0).sqrt();
        let values = a.values.iter().zip(&b_own.values).map(|(x, y)| scale * x + rest * y).collect();
        let background = match (a.background, b_own.background) {
            (None, None) => None,
            (ba, bb) => Some(scale * scale * ba.unwrap_or(0.0) + rest * rest * bb.unwrap_or(0.0)),
        };
        let b = Stream {
            values,
            background,
            signal_sd: b_own.signal_sd,
        };
        out.push(beam_dataset(cfg, &digest, BEAM_B, &state_b, &m, &b)?);
    }
    Ok(out)
}

/// The configured setting sweep, or `None` when the configuration has none.
pub fn simulate_scan(cfg: &RunConfig) -> Result<Option<Dataset>> {
    cfg.validate()?;
    let Some(spec) = &cfg.scan else {
        return Ok(None);
    };
    let state = cfg.state.to_state()?;
    let grid = spec.grid();
    let seed = derive_seed(cfg.seed, "scan", 0);
    let mut ds = match spec.technique {
        ScanTechnique::Homodyne => phase_scan(&state, &grid, spec.per_point, &cfg.mixing, seed)?,
        ScanTechnique::Resonator => detuning_scan(&state, spec.cavity.profile()?, &grid, spec.per_point, &cfg.mixing, seed)?,
    };
    ds.header.beam = BEAM_A.into();
    ds.header.seed = cfg.seed;
    ds.header.config_digest = Some(cfg.digest()?);
    Ok(Some(ds))
}

/// The cavity recorded in a resonator dataset's header.
pub fn profile_from_header(header: &DatasetHeader) -> Result<Option<Arc<LossyCavity>>> {
    use crate::state::MeasurementDescription;
    for m in &header.measurements {
        if let MeasurementDescription::Resonator { profile, .. } = m {
            let get = |k: &str| {
                profile
                    .get(k)
                    .and_then(|v| v.as_f64())
                    .ok_or_else(|| Error::Malformed(format!("resonator profile lacks {k}")))
            };
            if profile.get("kind").and_then(|v| v.as_str()) != Some("lossy_cavity") {
                return Err(Error::Malformed(format!("unknown resonator profile {profile}")));
            }
            return Ok(Some(Arc::new(LossyCavity::new(get("escape_efficiency")?, get("sideband_offset")?)?)));
        }
    }
    Ok(None)
}

/// Gaussianity report of one stream, with a known Gaussian background removed
/// from the moments first. The normality test and batch diagnostics see the
/// raw samples.
pub fn analyze_values(values: &[f64], background_variance: Option<f64>, options: &ReportOptions) -> Result<GaussianityReport> {
    let moments = estimate_moments(values, options.max_order, options.bootstrap_rounds, options.seed)?;
    let moments = match background_variance {
        Some(b) if b > 0.0 => correct_gaussian_background(&moments, b)?,
        _ => moments,
    };
    let mut report = report_from_moments(&moments, options.significance)?;
    if options.shapiro {
        report.w_test = Some(shapiro_wilk(values, options.seed)?);
    }
    if let Some(size) = options.batch_size {
        report.batches = batch_diagnostics(values, size)?;
    }
    Ok(report)
}

fn stream_report(
    label: &str,
    values: &[f64],
    background: Option<f64>,
    options: &ReportOptions,
    fit: Option<&FitOptions>,
) -> Result<StreamReport> {
    let gaussianity = stage("analyze", analyze_values(values, background, options))?;
    let asymmetry = infer_asymmetry(&gaussianity, gaussianity.variance.value.sqrt());
    let fit = match fit {
        Some(o) => Some(stage("fit", fit_phase_mixed_gaussian(values, o))?),
        None => None,
    };
    Ok(StreamReport {
        label: label.into(),
        background_variance: background,
        gaussianity,
        asymmetry,
        fit,
    })
}

/// Plugin standard error of the sample variance.
fn variance_with_error(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m4 = values.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / n;
    (m2, ((m4 - m2 * m2).max(0.0) / n).sqrt())
}

fn noise_rows(scan: &Dataset, state: &StateModel, cfg: &RunConfig, rec: Option<&Reconstruction>) -> Result<Vec<NoiseRow>> {
    let spec = cfg.scan.as_ref().expect("scan configured");
    let profile = spec.cavity.profile()?;
    let truth = state.covariance();
    let fitted = rec.map(|r| {
        let p: Vec<f64> = r.parameters.iter().map(|p| p.value.unwrap_or(0.0)).collect();
        crate::state::SymmetricCovariance::new(p[0], p[1], p[2], p[3]).matrix()
    });
    scan.groups()
        .map(|(setting, group)| {
            let m = match spec.technique {
                ScanTechnique::Homodyne => MeasurementModel::homodyne(setting),
                ScanTechnique::Resonator => MeasurementModel::resonator(setting, profile.clone()),
            };
            let r = m.response();
            let (variance, std_error) = variance_with_error(group);
            Ok(NoiseRow {
                setting,
                n: group.len(),
                variance,
                std_error,
                true_variance: truth.map(|v| r.mixed_variance(&v)),
                fitted_variance: fitted.map(|v| r.mixed_variance(&v)),
            })
        })
        .collect()
}

struct Writer<'a> {
    dir: Option<&'a Path>,
    files: Vec<PathBuf>,
}

impl Writer<'_> {
    fn text(&mut self, name: &str, content: &str) -> Result<()> {
        if let Some(dir) = self.dir {
            let path = dir.join(name);
            fs::write(&path, content)?;
            self.files.push(path);
        }
        Ok(())
    }

    fn dataset(&mut self, name: &str, ds: &Dataset, format: OutputFormat) -> Result<()> {
        if let Some(dir) = self.dir {
            let path = match format {
                OutputFormat::Binary => dir.join(format!("{name}.bin")),
                OutputFormat::Text => dir.join(format!("{name}.tsv")),
            };
            match format {
                OutputFormat::Binary => write_dataset(ds, &path)?,
                OutputFormat::Text => write_dataset_text(ds, &path)?,
            }
            self.files.push(path);
        }
        Ok(())
    }

    fn bundle(&mut self, bundle: &ReportBundle) -> Result<()> {
        let mut json = serde_json::to_string_pretty(bundle)?;
        json.push('\n');
        self.text("report.json", &json)?;
        self.text("report.txt", &render_text(bundle))
    }
}

/// Runs the whole chain. Files go to `out_dir`, or to the configured output
/// directory when `out_dir` is `None`; with neither, nothing is written.
pub fn run_pipeline(cfg: &RunConfig, out_dir: Option<&Path>) -> Result<PipelineRun> {
    cfg.validate()?;
    let digest = cfg.digest()?;
    let dir = out_dir.or(cfg.output.dir.as_deref());
    if let Some(d) = dir {
        fs::create_dir_all(d)?;
    }
    let mut writer = Writer { dir, files: Vec::new() };
    let mut bundle = ReportBundle::new(cfg, digest);
    match run_stages(cfg, &mut bundle, &mut writer) {
        Ok(()) => {
            bundle.complete = true;
            writer.bundle(&bundle)?;
            Ok(PipelineRun {
                bundle,
                files: writer.files,
            })
        }
        Err(e) => {
            if let Error::Stage { stage, source } = &e {
                bundle.failed_stage = Some((*stage).to_string());
                bundle.error = Some(source.to_string());
            } else {
                bundle.error = Some(e.to_string());
            }
            // Best effort: the original error matters more than a write failure.
            let _ = writer.bundle(&bundle);
            Err(e)
        }
    }
}

fn run_stages(cfg: &RunConfig, bundle: &mut ReportBundle, w: &mut Writer<'_>) -> Result<()> {
    let seed = cfg.seed;
    let digest = bundle.config_digest.clone();
    let preamble = |table: &str| table_preamble(table, seed, &digest, &cfg.scenario);

    let beams = stage("simulate", simulate_beams(cfg))?;
    if cfg.output.datasets {
        for ds in &beams {
            stage("write", w.dataset(&ds.header.beam, ds, cfg.output.format))?;
        }
    }

    let fit = cfg.analysis.fit.then(|| cfg.analysis.fit_options());
    for (i, ds) in beams.iter().enumerate() {
        let options = cfg.analysis.report_options(derive_seed(seed, "analysis", i as u64), cfg.samples.batch_size);
        let report = stream_report(&ds.header.beam, ds.values(), ds.header.background_variance, &options, fit.as_ref())?;
        bundle.beams.push(report);
    }

    if let [a, b] = beams.as_slice() {
        let ba = a.header.background_variance.unwrap_or(0.0);
        let bb = b.header.background_variance.unwrap_or(0.0);
        // Beam B carries `scale·(beam A)`, so the backgrounds are correlated.
        let tb = cfg.two_beam.as_ref().expect("two beams configured");
        let scale = correlated_scale(cfg, tb.correlation)?;
        for (j, sign) in [CombineSign::Plus, CombineSign::Minus].into_iter().enumerate() {
            let values = stage("combine", combine_two_beams(a.values(), b.values(), sign))?;
            let s = if sign == CombineSign::Plus { 1.0 } else { -1.0 };
            let background = (ba + bb > 0.0).then(|| 0.5 * (ba + bb + 2.0 * s * scale * ba));
            let label = format!("{BEAM_A}{}{BEAM_B}", if s > 0.0 { "+" } else { "-" });
            let options = cfg.analysis.report_options(derive_seed(seed, "analysis-combined", j as u64), cfg.samples.batch_size);
            let report = stream_report(&label, &values, background, &options, fit.as_ref())?;
            w_hist(w, &preamble, &label, &values, cfg, report.fit.as_ref())?;
            bundle.combinations.push(report);
        }
    }
    for (ds, report) in beams.iter().zip(&bundle.beams) {
        w_hist(w, &preamble, &ds.header.beam, ds.values(), cfg, report.fit.as_ref())?;
    }

    let streams: Vec<(&str, &GaussianityReport)> = bundle
        .beams
        .iter()
        .chain(&bundle.combinations)
        .map(|r| (r.label.as_str(), &r.gaussianity))
        .collect();
    stage("write", w.text("moment_ratios.tsv", &moment_ratio_table(&preamble("moment-ratios"), &cfg.scenario, &streams)))?;
    if !bundle.combinations.is_empty() {
        stage("write", w.text("two_beam.tsv", &stream_summary_table(&preamble("two-beam"), &streams)))?;
    }
    let failed_streams: Vec<String> = streams
        .iter()
        .filter(|(_, r)| !r.all_pass)
        .map(|(name, _)| name.to_string())
        .collect();
    let verdict = Verdict {
        pass: failed_streams.is_empty(),
        failed_streams,
    };

    if let Some(spec) = &cfg.scan {
        let scan = stage("scan", simulate_scan(cfg))?.expect("scan configured");
        if cfg.output.datasets {
            stage("write", w.dataset("scan", &scan, cfg.output.format))?;
        }
        let reconstruction = if spec.reconstruct {
            let profile = stage("reconstruct", spec.cavity.profile())?;
            let profile: Option<&dyn crate::state::ResonatorResponse> = match spec.technique {
                ScanTechnique::Resonator => Some(profile.as_ref()),
                ScanTechnique::Homodyne => None,
            };
            Some(stage(
                "reconstruct",
                reconstruct_symmetric_covariance(&scan, profile, cfg.analysis.bootstrap_rounds, derive_seed(seed, "reconstruct", 0)),
            )?)
        } else {
            None
        };
        let state = cfg.state.to_state()?;
        let rows = stage("scan", noise_rows(&scan, &state, cfg, reconstruction.as_ref()))?;
        let axis = match scan.header.axis {
            SettingAxis::Theta => "theta",
            SettingAxis::Detuning => "detuning",
            SettingAxis::Fixed => "setting",
        };
        stage("write", w.text("noise_vs_setting.tsv", &noise_table(&preamble("noise-vs-setting"), axis, &rows)))?;
        bundle.scan = Some(ScanReport {
            technique: scan.header.technique,
            axis: scan.header.axis,
            n_settings: scan.header.settings.len(),
            per_point: spec.per_point,
            records: scan.header.total_count(),
            reconstruction,
        });
    }
    bundle.verdict = Some(verdict);
    Ok(())
}

/// Factor multiplying beam A inside beam B.
fn correlated_scale(cfg: &RunConfig, rho: f64) -> Result<f64> {
    let m = cfg.measurement.to_model()?;
    let sa = cfg.state.to_state()?.component_stats(&m)?.mixed_std();
    let sb = match cfg.two_beam.as_ref().and_then(|t| t.state.as_ref()) {
        Some(s) => s.to_state()?.component_stats(&m)?.mixed_std(),
        None => sa,
    };
    Ok(if sa > 0.0 { rho * sb / sa } else { 0.0 })
}

fn w_hist(
    w: &mut Writer<'_>,
    preamble: &dyn Fn(&str) -> String,
    label: &str,
    values: &[f64],
    cfg: &RunConfig,
    fit: Option<&MixedGaussianFit>,
) -> Result<()> {
    let table = histogram_table(&preamble("histogram"), values, cfg.analysis.histogram_bins, fit);
    stage("write", w.text(&format!("histogram_{label}.tsv"), &table))
}

/// Human-readable summary of a bundle.
pub fn render_text(b: &ReportBundle) -> String {
    let mut out = String::new();
    let mut line = |s: String| {
        out.push_str(&s);
        out.push('\n');
    };
    line(format!("phasemix report v{} scenario {}", b.version, b.scenario));
    line(format!("seed {} digest {}", b.seed, b.config_digest));
    if !b.complete {
        line(format!(
            "INCOMPLETE: stage {} failed: {}",
            b.failed_stage.as_deref().unwrap_or("?"),
            b.error.as_deref().unwrap_or("?")
        ));
    }
    for r in b.beams.iter().chain(&b.combinations) {
        let g = &r.gaussianity;
        line(String::new());
        line(format!(
            "[{}] n = {}, variance = {} SQL",
            r.label,
            g.n_samples,
            crate::analysis::format_with_uncertainty(g.variance.value, g.variance.std_error)
        ));
        if let Some(bg) = r.background_variance {
            line(format!("  background variance removed: {bg:.4e}"));
        }
        line(format!("  d = {} (z = {:.2})", g.d.formatted, g.d.z));
        for ratio in &g.ratios {
            line(format!(
                "  r^{:<2} = {:<20} reference {:<8} z = {:>7.2}  {}",
                ratio.order,
                ratio.formatted,
                ratio.reference,
                ratio.z,
                if ratio.pass { "pass" } else { "FAIL" }
            ));
        }
        line(format!(
            "  verdict: {} at |z| <= {:.3}",
            if g.all_pass { "consistent with Gaussian" } else { "NOT Gaussian" },
            g.threshold_z
        ));
        if let Some(w) = &g.w_test {
            line(format!("  Shapiro-Wilk W = {:.6}, p = {:.4} (n = {})", w.w, w.p_value, w.n_used));
        }
        let a = &r.asymmetry;
        line(format!(
            "  asymmetry |s_cos^2 - s_sin^2| = {}",
            crate::analysis::format_with_uncertainty(a.asymmetry, a.asymmetry_std_error)
        ));
        if let Some(f) = &r.fit {
            line(format!(
                "  mixed-Gaussian fit: s_cos = {:.5}, s_sin = {:.5}, gain over one Gaussian = {:.3}, converged = {}",
                f.s_cos, f.s_sin, f.comparison, f.converged
            ));
        }
    }
    if let Some(s) = &b.scan {
        line(String::new());
        line(format!(
            "[scan] {:?} over {} settings x {} samples = {} records",
            s.technique, s.n_settings, s.per_point, s.records
        ));
        if let Some(rec) = &s.reconstruction {
            for p in &rec.parameters {
                match (p.value, p.std_error) {
                    (Some(v), Some(e)) => line(format!(
                        "  {:<5} = {}",
                        p.name,
                        crate::analysis::format_with_uncertainty(v, e)
                    )),
                    _ => line(format!("  {:<5} inaccessible", p.name)),
                }
            }
            line(format!("  reduced chi2 = {:.3} ({} dof)", rec.reduced_chi2, rec.dof));
        }
    }
    if let Some(v) = &b.verdict {
        line(String::new());
        let mut s = format!("overall: {}", if v.pass { "PASS" } else { "FAIL" });
        if !v.failed_streams.is_empty() {
            let _ = write!(s, " ({})", v.failed_streams.join(", "));
        }
        line(s);
    }
    out
}
