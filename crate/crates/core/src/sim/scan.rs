use std::sync::Arc;

use rayon::prelude::*;

use super::mixing::{phase_mix, PhaseMixingModel};
use super::rng::derive_seed;
use super::sampling::sample_components;
use crate::error::{Error, Result};
use crate::io::{Dataset, DatasetHeader, SettingAxis, Technique};
use crate::state::{MeasurementModel, ResonatorResponse, StateModel};

/// One acquisition setting of a scan.
#[derive(Clone, Debug)]
pub struct ScanPoint {
    pub setting: f64,
    pub model: MeasurementModel,
}

/// Phase-mixed samples for every setting, `per_point` each. Setting `i` draws
/// from its own seed derived from `(seed, i)`.
pub fn scan(
    state: &StateModel,
    technique: Technique,
    axis: SettingAxis,
    points: &[ScanPoint],
    per_point: usize,
    mixing: &PhaseMixingModel,
    seed: u64,
) -> Result<Dataset> {
    if points.is_empty() {
        return Err(Error::invalid("scan grid is empty"));
    }
    if per_point < 2 {
        return Err(Error::invalid("scan needs at least 2 samples per setting"));
    }
    state.validate()?;
    mixing.validate()?;
    for p in points {
        p.model.validate()?;
    }
    let groups = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let point_seed = derive_seed(seed, "scan-setting", i as u64);
            let pairs = sample_components(state, &p.model, per_point, point_seed)?;
            Ok((p.setting, phase_mix(&pairs, mixing, point_seed)?))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut header = DatasetHeader::new("beam-0", technique, axis, seed);
    header.state = Some(serde_json::to_value(state)?);
    header.measurements = points.iter().map(|p| p.model.describe()).collect();
    header.mixing = Some(*mixing);
    Dataset::from_groups(header, groups)
}

/// Resonator detection swept over `detunings`.
pub fn detuning_scan(
    state: &StateModel,
    profile: Arc<dyn ResonatorResponse>,
    detunings: &[f64],
    per_point: usize,
    mixing: &PhaseMixingModel,
    seed: u64,
) -> Result<Dataset> {
    let points: Vec<_> = detunings
        .iter()
        .map(|&d| ScanPoint {
            setting: d,
            model: MeasurementModel::resonator(d, profile.clone()),
        })
        .collect();
    scan(state, Technique::Resonator, SettingAxis::Detuning, &points, per_point, mixing, seed)
}

/// Homodyne detection swept over local-oscillator phases.
pub fn phase_scan(
    state: &StateModel,
    phases: &[f64],
    per_point: usize,
    mixing: &PhaseMixingModel,
    seed: u64,
) -> Result<Dataset> {
    let points: Vec<_> = phases
        .iter()
        .map(|&phi| ScanPoint {
            setting: phi,
            model: MeasurementModel::homodyne(phi),
        })
        .collect();
    scan(state, Technique::Homodyne, SettingAxis::Theta, &points, per_point, mixing, seed)
}

/// `n` evenly spaced values from `lo` to `hi` inclusive.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect(),
    }
}
