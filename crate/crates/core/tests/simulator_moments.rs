//! Simulated streams against the analytic moments of their generating state.
//! Every comparison allows 6 standard errors.

use std::sync::Arc;

use phasemix_core::analysis::{estimate_moments, reconstruct_symmetric_covariance};
use phasemix_core::moments::mixed_moment;
use phasemix_core::sim::{
    build_masquerade_state, detuning_scan, linear_grid, phase_mix, sample_components, PhaseMixingModel,
};
use phasemix_core::state::{
    predicted_component_stats, symmetric_covariance, ComponentLaw, EngineeredLaw, LossyCavity, MeasurementModel,
    StateModel, TwoModeCovariance,
};

const N: usize = 400_000;

fn check_mixed_moments(label: &str, state: &StateModel, m: &MeasurementModel, seed: u64) {
    let pairs = sample_components(state, m, N, seed).unwrap();
    let values = phase_mix(&pairs, &PhaseMixingModel::UniformPerSample {}, seed + 1).unwrap();
    let stats = state.component_stats(m).unwrap();
    let est = estimate_moments(&values, 8, 0, seed).unwrap();
    for order in 2..=8 {
        let e = est.get(order).unwrap();
        let want = mixed_moment(order, &stats).unwrap();
        let z = (e.value - want) / e.std_error;
        assert!(z.abs() < 6.0, "{label}: order {order}: {} vs {want} (z = {z:.2})", e.value);
    }
}

#[test]
fn gaussian_homodyne_stream() {
    let state = StateModel::gaussian(symmetric_covariance(2.0, 1.5, 0.2, 0.6).unwrap());
    check_mixed_moments("homodyne", &state, &MeasurementModel::homodyne(0.4), 11);
}

#[test]
fn gaussian_resonator_stream() {
    let state = StateModel::gaussian(symmetric_covariance(2.0, 1.5, 0.2, 0.6).unwrap());
    let m = MeasurementModel::resonator(0.7, Arc::new(LossyCavity::default()));
    check_mixed_moments("resonator", &state, &m, 12);
}

#[test]
fn mixture_stream() {
    let a = symmetric_covariance(3.0, 1.0, 0.0, 0.5).unwrap();
    let b = TwoModeCovariance::vacuum();
    let state = StateModel::mixture(vec![0.3, 0.7], vec![a, b]).unwrap();
    check_mixed_moments("mixture", &state, &MeasurementModel::homodyne(0.0), 13);
}

#[test]
fn engineered_stream() {
    let law = EngineeredLaw::independent(
        ComponentLaw::UniformPlusGaussian {
            half_width: 2.0,
            gaussian_sd: 0.5,
        },
        ComponentLaw::Gaussian { sd: 1.2 },
    )
    .unwrap();
    check_mixed_moments("engineered", &StateModel::Engineered { law }, &MeasurementModel::homodyne(0.0), 14);
}

#[test]
fn masquerade_stream() {
    let state = build_masquerade_state(1.0, 2.0, 0.0).unwrap();
    check_mixed_moments("masquerade", &state, &MeasurementModel::homodyne(0.0), 15);
}

#[test]
fn component_covariance_follows_the_response() {
    let v = symmetric_covariance(2.0, 1.5, 0.2, 0.6).unwrap();
    let state = StateModel::gaussian(v);
    for m in [
        MeasurementModel::homodyne(1.1),
        MeasurementModel::resonator(-1.3, Arc::new(LossyCavity::default())),
        MeasurementModel::resonator(4.0, Arc::new(LossyCavity::new(0.7, 2.0).unwrap())),
    ] {
        let pairs = sample_components(&state, &m, N, 21).unwrap();
        let want = predicted_component_stats(&v, &m).unwrap().covariance();
        let n = pairs.len() as f64;
        for (i, j) in [(0, 0), (1, 1), (0, 1)] {
            let prods: Vec<f64> = pairs.iter().map(|p| p[i] * p[j]).collect();
            let mean = prods.iter().sum::<f64>() / n;
            let var = prods.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
            let z = (mean - want[i][j]) / (var / n).sqrt();
            assert!(z.abs() < 6.0, "{m:?} ({i},{j}): {mean} vs {} (z = {z:.2})", want[i][j]);
        }
    }
}

#[test]
fn locked_phase_reads_the_cosine_component() {
    let state = StateModel::gaussian(symmetric_covariance(2.0, 1.5, 0.2, 0.6).unwrap());
    let pairs = sample_components(&state, &MeasurementModel::homodyne(0.0), 1000, 3).unwrap();
    let values = phase_mix(&pairs, &PhaseMixingModel::Locked { theta: 0.0 }, 4).unwrap();
    assert!(values.iter().zip(&pairs).all(|(v, p)| *v == p[0]));
}

/// Repeated scans: the reconstruction errors must be centred and calibrated.
#[test]
fn resonator_reconstruction_is_unbiased_and_calibrated() {
    let truth = [2.0, 1.5, 0.2, 0.6];
    let state = StateModel::gaussian(symmetric_covariance(truth[0], truth[1], truth[2], truth[3]).unwrap());
    let profile = Arc::new(LossyCavity::default());
    let grid = linear_grid(-6.0, 6.0, 150);
    let reps = 40;
    let mut z = vec![Vec::new(); 4];
    for r in 0..reps {
        let ds = detuning_scan(&state, profile.clone(), &grid, 400, &PhaseMixingModel::UniformPerSample {}, 1000 + r).unwrap();
        let rec = reconstruct_symmetric_covariance(&ds, Some(profile.as_ref()), 0, r).unwrap();
        for (j, p) in rec.parameters.iter().enumerate() {
            z[j].push((p.value.unwrap() - truth[j]) / p.std_error.unwrap());
        }
    }
    for (j, zs) in z.iter().enumerate() {
        let mean = zs.iter().sum::<f64>() / reps as f64;
        let sd = (zs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (reps - 1) as f64).sqrt();
        // mean of 40 unit normals: sd 0.16; allow 4 of those
        assert!(mean.abs() < 4.0 / (reps as f64).sqrt(), "parameter {j}: mean z {mean:.3}");
        assert!((0.6..1.5).contains(&sd), "parameter {j}: z spread {sd:.3}");
    }
}
