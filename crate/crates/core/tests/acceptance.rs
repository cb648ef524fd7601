//! Acceptance checks, one `PASS`/`FAIL` line each. Runs without the libtest
//! harness so the lines always reach the console; exits non-zero when any
//! check fails.
//!
//! Seeds are fixed up front and never tuned to a result.

use std::f64::consts::{PI, TAU};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use num::{BigRational, One, Zero};
use phasemix_core::analysis::{
    fit_phase_mixed_gaussian, gaussianity_report, infer_asymmetry, reconstruct_symmetric_covariance, shapiro_wilk,
    FitOptions, ReportOptions,
};
use phasemix_core::io::{run_pipeline, RunConfig};
use phasemix_core::moments::{
    dnk_coefficient, dnk_sum_is_zero, fourth_order_identity_residual, higher_order_constraint_residual,
    mixed_moment_from_components, ComponentStats,
};
use phasemix_core::sim::{
    build_masquerade_state, detuning_scan, phase_mix, phase_scan, sample_components, synthesize_and_demodulate,
    BackgroundNoise, DemodConfig, Demodulator, PhaseMixingModel,
};
use phasemix_core::state::{symmetric_covariance, LossyCavity, MeasurementModel, StateModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use statrs::distribution::{ChiSquared, ContinuousCDF};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Runs one check, folding a runtime limit (seconds) into its verdict.
fn check(id: u32, name: &str, limit: Option<f64>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let result = std::panic::catch_unwind(std::panic::AssertUnwindSafe(f));
    let secs = start.elapsed().as_secs_f64();
    let (mut pass, mut detail) = match result {
        Ok(o) => (o.pass, o.detail),
        Err(_) => (false, "panicked".to_string()),
    };
    if let Some(limit) = limit {
        detail.push_str(&format!("; {secs:.2} s (limit {limit} s)"));
        pass &= secs < limit;
    } else {
        detail.push_str(&format!("; {secs:.2} s"));
    }
    println!("{} [{id:>2}] {name}: {detail}", if pass { "PASS" } else { "FAIL" });
    pass
}

fn random_gaussian_stats(rng: &mut ChaCha8Rng, correlated: bool) -> ComponentStats {
    let s_cos = rng.random_range(0.1..3.0);
    let s_sin = rng.random_range(0.1..3.0);
    let c = if correlated { rng.random_range(-0.99..0.99) } else { 0.0 };
    ComponentStats::gaussian(s_cos, s_sin, c).expect("valid statistics")
}

fn identity_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst4 = 0.0f64;
    for _ in 0..1000 {
        let stats = random_gaussian_stats(&mut rng, true);
        worst4 = worst4.max(fourth_order_identity_residual(&stats).unwrap().abs());
    }
    let mut worst_rel = 0.0f64;
    for _ in 0..100 {
        let stats = random_gaussian_stats(&mut rng, false);
        for n in 2..=7 {
            let sides = higher_order_constraint_residual(n, &stats).unwrap();
            worst_rel = worst_rel.max((sides.lhs - sides.rhs).abs() / sides.scale);
        }
    }
    outcome(
        worst4 < 1e-10 && worst_rel < 1e-9,
        format!("max |fourth-order residual| = {worst4:.2e} (< 1e-10), max |lhs - rhs| / scale for n = 2..7 = {worst_rel:.2e} (< 1e-9)"),
    )
}

/// Adaptive Simpson integration of `f` over `[a, b]` to absolute tolerance `tol`.
fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn recurse(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, tol: f64, depth: u32) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    recurse(f, a, b, fa, fm, fb, whole, tol, 40)
}

fn oracle_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let stats = random_gaussian_stats(&mut rng, true);
        let (sc, ss, c) = (stats.s_cos(), stats.s_sin(), stats.c());
        for n in 1..=7u32 {
            // I_θ = cos θ I_cos + sin θ I_sin is Gaussian at fixed θ.
            let double_fact: f64 = (1..=n).map(|j| (2 * j - 1) as f64).product();
            let integrand = |t: f64| {
                let (s, co) = t.sin_cos();
                let v = sc * sc * co * co + 2.0 * c * sc * ss * co * s + ss * ss * s * s;
                double_fact * v.powi(n as i32)
            };
            let scale = double_fact * (sc.max(ss)).powi(2 * n as i32);
            let oracle = adaptive_simpson(&integrand, 0.0, TAU, 1e-13 * scale * TAU) / TAU;
            let got = mixed_moment_from_components(n, &stats).unwrap();
            worst = worst.max((got - oracle).abs() / oracle.abs());
        }
    }
    outcome(worst < 1e-10, format!("max relative deviation from adaptive quadrature = {worst:.2e} (< 1e-10)"))
}

fn d_coefficient_suite() -> Outcome {
    let all_zero = (2..=10).all(|n| dnk_sum_is_zero(n).unwrap());
    let half = BigRational::new(1.into(), 2.into());
    let d2: Vec<BigRational> = (0..=2).map(|k| dnk_coefficient(2, k).unwrap()).collect();
    let expected = [-half.clone(), BigRational::one(), -half];
    let d2_ok = d2 == expected;
    // independent rational check of the sums
    let manual_zero = (2..=10).all(|n| {
        (0..=n)
            .map(|k| dnk_coefficient(n, k).unwrap())
            .fold(BigRational::zero(), |a, b| a + b)
            .is_zero()
    });
    let shown: Vec<String> = d2.iter().map(|r| r.to_string()).collect();
    outcome(
        all_zero && manual_zero && d2_ok,
        format!("sum_k d(n,k) = 0 exactly for n = 2..10: {}; d(2,.) = ({})", all_zero && manual_zero, shown.join(", ")),
    )
}

fn mixed_samples(state: &StateModel, n: usize, seed: u64) -> Vec<f64> {
    let pairs = sample_components(state, &MeasurementModel::homodyne(0.0), n, seed).unwrap();
    phase_mix(&pairs, &PhaseMixingModel::UniformPerSample {}, seed ^ 0x5eed).unwrap()
}

fn symmetric_state_regression() -> Outcome {
    let n = 280_000;
    let state = StateModel::gaussian(symmetric_covariance(2.0, 2.0, 0.0, 1.0).unwrap());
    let values = mixed_samples(&state, n, 303);
    let options = ReportOptions {
        seed: 304,
        shapiro: false,
        ..ReportOptions::default()
    };
    let report = gaussianity_report(&values, &options).unwrap();
    let k_tol = 3.0 * (24.0 / n as f64).sqrt();
    let k_ok = (report.k.value - 3.0).abs() <= k_tol;
    let ratios_ok = report.ratios.iter().all(|r| r.z.abs() <= 3.0);
    let listed: Vec<String> = report
        .ratios
        .iter()
        .map(|r| format!("r{}={} (z={:.2})", r.order, r.formatted, r.z))
        .collect();
    outcome(
        k_ok && ratios_ok,
        format!("k = {} (|k-3| <= {k_tol:.4}); {}", report.k.formatted, listed.join(", ")),
    )
}

fn masquerade() -> Outcome {
    let n = 1_000_000;
    let options = ReportOptions {
        max_order: 4,
        seed: 405,
        shapiro: false,
        ..ReportOptions::default()
    };
    let masq = build_masquerade_state(1.0, 2.0, 0.0).unwrap();
    let masq_report = gaussianity_report(&mixed_samples(&masq, n, 403), &options).unwrap();
    let gauss = StateModel::component_gaussian(1.0, 2.0, 0.0).unwrap();
    let gauss_report = gaussianity_report(&mixed_samples(&gauss, n, 404), &options).unwrap();
    let masq_pass = masq_report.k.z.abs() <= 3.0;
    let expected = 22.125 / 6.25;
    let gauss_fails = gauss_report.k.z.abs() > 3.0;
    // Target 3.54 at a precision of 0.01: the standard error must be at most
    // 0.01 and the estimate within 3 of its standard errors of 3.54.
    let (k, se) = (gauss_report.k.value, gauss_report.k.std_error);
    let gauss_close = se <= 0.01 && (k - expected).abs() <= 3.0 * se;
    let in_band = (k - expected).abs() <= 0.01;
    outcome(
        masq_pass && gauss_fails && gauss_close,
        format!(
            "masquerade k = {} (z = {:.2}, needs |z| <= 3); Gaussian k = {} (z = {:.1} against 3, needs > 3; {:.2} standard errors from {expected}, needs <= 3 with error <= 0.01; inside the bare 3.54 +/- 0.01 band: {in_band})",
            masq_report.k.formatted,
            masq_report.k.z,
            gauss_report.k.formatted,
            gauss_report.k.z,
            (k - expected) / se
        ),
    )
}

fn asymmetry_round_trip() -> Outcome {
    let state = StateModel::component_gaussian(1.0, 2.0, 0.0).unwrap();
    let values = mixed_samples(&state, 1_000_000, 506);
    let options = ReportOptions {
        max_order: 4,
        seed: 507,
        shapiro: false,
        ..ReportOptions::default()
    };
    let report = gaussianity_report(&values, &options).unwrap();
    let a = infer_asymmetry(&report, report.variance.value.sqrt());
    let rel = (a.asymmetry - 3.0).abs() / 3.0;
    outcome(
        rel <= 0.05,
        format!("|s_cos^2 - s_sin^2| = {:.4} +/- {:.4}, relative error {:.2}% (<= 5%)", a.asymmetry, a.asymmetry_std_error, 100.0 * rel),
    )
}

fn mle_round_trip() -> Outcome {
    let n = 1_000_000;
    let options = FitOptions::default();
    let asym = StateModel::component_gaussian(2.0, 1.0, 0.0).unwrap();
    let fit = fit_phase_mixed_gaussian(&mixed_samples(&asym, n, 608), &options).unwrap();
    let err_cos = (fit.s_cos - 2.0).abs() / 2.0;
    let err_sin = (fit.s_sin - 1.0).abs();
    let recovered = fit.converged && err_cos <= 0.02 && err_sin <= 0.02;

    let single = StateModel::component_gaussian(1.5, 1.5, 0.0).unwrap();
    let null_fit = fit_phase_mixed_gaussian(&mixed_samples(&single, n, 609), &options).unwrap();
    // One extra parameter: twice the gain against the 99.9% chi-square(1) point.
    let critical = ChiSquared::new(1.0).unwrap().inverse_cdf(0.999);
    let near_zero = 2.0 * null_fit.comparison <= critical;
    outcome(
        recovered && near_zero,
        format!(
            "fit (s_cos, s_sin) = ({:.4}, {:.4}) errors ({:.2}%, {:.2}%) (<= 2%); single-Gaussian input gain = {:.3} nats, 2*gain <= {critical:.2}",
            fit.s_cos,
            fit.s_sin,
            100.0 * err_cos,
            100.0 * err_sin,
            null_fit.comparison
        ),
    )
}

fn reconstruction_suite() -> Outcome {
    let truth = [2.0, 1.5, 0.2, 0.6];
    let state = StateModel::gaussian(symmetric_covariance(truth[0], truth[1], truth[2], truth[3]).unwrap());
    let profile = Arc::new(LossyCavity::default());
    let detunings: Vec<f64> = (0..450).map(|i| -6.0 + 12.0 * i as f64 / 449.0).collect();
    let mixing = PhaseMixingModel::UniformPerSample {};
    let rd = detuning_scan(&state, profile.clone(), &detunings, 1000, &mixing, 801).unwrap();
    let records_ok = rd.header.total_count() == 450_000;
    let rec = reconstruct_symmetric_covariance(&rd, Some(profile.as_ref()), 200, 802).unwrap();
    let mut rd_ok = true;
    let mut rd_text = Vec::new();
    for (p, t) in rec.parameters.iter().zip(truth) {
        let (v, e) = (p.value.unwrap_or(f64::NAN), p.std_error.unwrap_or(f64::NAN));
        let z = (v - t) / e;
        rd_ok &= z.abs() <= 3.0;
        rd_text.push(format!("{}={v:.4}+/-{e:.4} (z={z:.2})", p.name));
    }

    let phases: Vec<f64> = (0..450).map(|i| PI * i as f64 / 450.0).collect();
    let hd = phase_scan(&state, &phases, 1000, &mixing, 803).unwrap();
    let hd_rec = reconstruct_symmetric_covariance(&hd, None, 200, 804).unwrap();
    let mut hd_ok = true;
    let mut hd_text = Vec::new();
    for (p, t) in hd_rec.parameters.iter().zip(truth).take(3) {
        match (p.value, p.std_error) {
            (Some(v), Some(e)) => {
                let z = (v - t) / e;
                hd_ok &= z.abs() <= 3.0;
                hd_text.push(format!("{}={v:.4}+/-{e:.4} (z={z:.2})", p.name));
            }
            _ => hd_ok = false,
        }
    }
    let delta_flagged = hd_rec.parameter("delta").is_some_and(|p| p.value.is_none());
    outcome(
        records_ok && rd_ok && hd_ok && delta_flagged,
        format!(
            "RD {} records: {}; HD: {}, delta inaccessible: {delta_flagged}",
            rd.header.total_count(),
            rd_text.join(", "),
            hd_text.join(", ")
        ),
    )
}

fn dsp_suite() -> Outcome {
    let cfg = DemodConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let pairs: Vec<[f64; 2]> = (0..200)
        .map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
        .collect();
    let out = synthesize_and_demodulate(&pairs, &cfg, &BackgroundNoise::None, 910).unwrap();
    let worst_in = pairs
        .iter()
        .zip(&out)
        .map(|(p, o)| (p[0] - o[0]).hypot(p[1] - o[1]) / p[0].hypot(p[1]))
        .fold(0.0f64, f64::max);

    let demod = Demodulator::new(cfg).unwrap();
    let f = cfg.analysis_frequency + 10.0 * cfg.resolution();
    let mut worst_off = 0.0f64;
    for k in 0..16 {
        let phase = TAU * k as f64 / 16.0;
        let raw: Vec<f64> = (0..cfg.window_samples())
            .map(|m| (TAU * f * m as f64 / cfg.sample_rate + phase).cos())
            .collect();
        let o = demod.demodulate(&raw).unwrap();
        worst_off = worst_off.max(o[0].hypot(o[1]));
    }
    outcome(
        worst_in <= 0.01 && worst_off < 0.05,
        format!(
            "in-band relative amplitude error {:.3}% (<= 1%); tone at +10 resolution widths passes {:.3}% (< 5%)",
            100.0 * worst_in,
            100.0 * worst_off
        ),
    )
}

fn normality_calibration() -> Outcome {
    let trials = 1000;
    let n = 2000;
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let mut null_rejections = 0;
    let mut uniform_rejections = 0;
    for t in 0..trials {
        let normal: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        if shapiro_wilk(&normal, t).unwrap().p_value < 0.05 {
            null_rejections += 1;
        }
        let uniform: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        if shapiro_wilk(&uniform, t).unwrap().p_value < 0.05 {
            uniform_rejections += 1;
        }
    }
    let rate = null_rejections as f64 / trials as f64;
    let sigma = (0.05f64 * 0.95 / trials as f64).sqrt();
    let power = uniform_rejections as f64 / trials as f64;
    outcome(
        (rate - 0.05).abs() <= 3.0 * sigma && power >= 0.99,
        format!(
            "null rejection rate {rate:.3} (0.05 +/- {:.4}); power against uniform {:.3} (>= 0.99)",
            3.0 * sigma,
            power
        ),
    )
}

const DETERMINISM_CONFIG: &str = r#"
seed = 1111
scenario = "determinism"

[state]
kind = "symmetric"
alpha = 2.0
beta = 1.5
gamma = 0.2
delta = 0.6

[measurement]
kind = "resonator"
detuning = 0.5

[samples]
count = 150000
batch_size = 10000

[demod]
background_sd = 0.05

[two_beam]
correlation = -0.4

[scan]
technique = "homodyne"
start = 0.0
stop = 3.0
points = 40
per_point = 500

[analysis]
bootstrap_rounds = 50
"#;

fn files_in(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn determinism() -> Outcome {
    let cfg = RunConfig::from_toml_str(DETERMINISM_CONFIG).unwrap();
    let tmp = tempfile::tempdir().unwrap();
    let mut runs = Vec::new();
    for (label, threads) in [("t1", 1), ("t4", 4), ("t4-again", 4), ("t3", 3)] {
        let dir = tmp.path().join(label);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| run_pipeline(&cfg, Some(&dir))).unwrap();
        runs.push((label, files_in(&dir)));
    }
    let reference = &runs[0].1;
    let identical = runs.iter().all(|(_, files)| files == reference);
    let n_files = reference.len();
    let bytes: usize = reference.iter().map(|(_, b)| b.len()).sum();
    outcome(
        identical && n_files > 0,
        format!("{n_files} files ({bytes} bytes) byte-identical across 1, 4, 4 and 3 worker threads: {identical}"),
    )
}

fn main() -> ExitCode {
    println!("acceptance checks");
    let results = [
        check(1, "identity suite", Some(10.0), identity_suite),
        check(2, "oracle suite", Some(30.0), oracle_suite),
        check(3, "d-coefficient suite", None, d_coefficient_suite),
        check(4, "symmetric-state regression, n = 280000", Some(60.0), symmetric_state_regression),
        check(5, "masquerade demonstration, n = 1e6", Some(60.0), masquerade),
        check(6, "asymmetry inference round trip", None, asymmetry_round_trip),
        check(7, "mixed-Gaussian MLE round trip", None, mle_round_trip),
        check(8, "reconstruction suite, 450 x 1000", Some(120.0), reconstruction_suite),
        check(9, "DSP suite", None, dsp_suite),
        check(10, "normality-test calibration", None, normality_calibration),
        check(11, "determinism", None, determinism),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("{passed}/{} acceptance checks passed", results.len());
    if passed == results.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
