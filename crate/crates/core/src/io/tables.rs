//! Plot-ready tab-separated tables. Every table starts with one `#` line
//! carrying the seed, config digest and scenario label.

use std::f64::consts::TAU;
use std::fmt::Write;

use crate::analysis::{GaussianityReport, MixedGaussianFit};

/// Provenance line shared by every table.
pub fn table_preamble(table: &str, seed: u64, digest: &str, scenario: &str) -> String {
    format!("# phasemix {table} seed={seed} digest={digest} scenario={scenario}\n")
}

/// One row per ratio (order 3 and the even orders) of every stream.
pub fn moment_ratio_table(preamble: &str, scenario: &str, streams: &[(&str, &GaussianityReport)]) -> String {
    let mut out = String::from(preamble);
    out.push_str("scenario\tstream\torder\tvalue\tstd_error\treference\tz\tpass\tformatted\n");
    for (name, report) in streams {
        for r in std::iter::once(&report.d).chain(&report.ratios) {
            writeln!(
                out,
                "{scenario}\t{name}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.order, r.value, r.std_error, r.reference, r.z, r.pass, r.formatted
            )
            .expect("writing to a String");
        }
    }
    out
}

/// Second-order and kurtosis summary of each single or combined stream.
pub fn stream_summary_table(preamble: &str, streams: &[(&str, &GaussianityReport)]) -> String {
    let mut out = String::from(preamble);
    out.push_str("stream\tn\tvariance\tvariance_std_error\tk\tk_std_error\tk_formatted\tall_pass\n");
    for (name, r) in streams {
        writeln!(
            out,
            "{name}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            r.n_samples, r.variance.value, r.variance.std_error, r.k.value, r.k.std_error, r.k.formatted, r.all_pass
        )
        .expect("writing to a String");
    }
    out
}

/// Density of the phase-mixed Gaussian with component deviations
/// `(s_cos, s_sin)` and no correlation, averaged over `nodes` phases.
pub fn phase_mixed_density(x: f64, s_cos: f64, s_sin: f64, nodes: usize) -> f64 {
    let total: f64 = (0..nodes)
        .map(|j| {
            let th = TAU * j as f64 / nodes as f64;
            let var = (s_cos * th.cos()).powi(2) + (s_sin * th.sin()).powi(2);
            (-0.5 * x * x / var).exp() / (TAU * var).sqrt()
        })
        .sum();
    total / nodes as f64
}

/// Histogram over `±5` measured standard deviations with the zero-mean
/// Gaussian overlay of the measured variance and, when given, the fitted
/// phase-mixed density. Samples outside the range are counted in the preamble.
pub fn histogram_table(preamble: &str, values: &[f64], bins: usize, fit: Option<&MixedGaussianFit>) -> String {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let sd = variance.sqrt();
    let (lo, hi) = if sd > 0.0 { (-5.0 * sd, 5.0 * sd) } else { (mean - 0.5, mean + 0.5) };
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0u64; bins];
    let mut outside = 0u64;
    for &v in values {
        let b = ((v - lo) / width).floor();
        if b >= 0.0 && (b as usize) < bins {
            counts[b as usize] += 1;
        } else {
            outside += 1;
        }
    }
    let mut out = String::from(preamble);
    writeln!(
        out,
        "# overlay: gaussian mean=0 variance={variance}; sample mean={mean}; outside range={outside}"
    )
    .expect("writing to a String");
    if let Some(f) = fit {
        writeln!(out, "# overlay: phase-mixed gaussian s_cos={} s_sin={}", f.s_cos, f.s_sin).expect("writing to a String");
    }
    out.push_str("bin_low\tbin_high\tcenter\tcount\tdensity\tgaussian_density\tfit_density\n");
    for (i, &c) in counts.iter().enumerate() {
        let a = lo + i as f64 * width;
        let b = a + width;
        let x = 0.5 * (a + b);
        let gauss = if sd > 0.0 {
            (-0.5 * x * x / variance).exp() / (TAU * variance).sqrt()
        } else {
            0.0
        };
        let fit_density = fit.map_or(f64::NAN, |f| phase_mixed_density(x, f.s_cos, f.s_sin, 64));
        writeln!(
            out,
            "{a}\t{b}\t{x}\t{c}\t{}\t{gauss}\t{fit_density}",
            c as f64 / (n * width)
        )
        .expect("writing to a String");
    }
    out
}

/// One row per scan setting.
pub struct NoiseRow {
    pub setting: f64,
    pub n: usize,
    pub variance: f64,
    pub std_error: f64,
    /// From the generating state, when it has a covariance.
    pub true_variance: Option<f64>,
    /// From the reconstructed parameters.
    pub fitted_variance: Option<f64>,
}

pub fn noise_table(preamble: &str, axis: &str, rows: &[NoiseRow]) -> String {
    let opt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |x| x.to_string());
    let mut out = String::from(preamble);
    writeln!(out, "{axis}\tn\tvariance\tstd_error\ttrue_variance\tfitted_variance").expect("writing to a String");
    for r in rows {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            r.setting,
            r.n,
            r.variance,
            r.std_error,
            opt(r.true_variance),
            opt(r.fitted_variance)
        )
        .expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mixed_density_integrates_to_one_and_reduces_to_gaussian() {
        let dx = 1e-3;
        let total: f64 = (-20_000..=20_000)
            .map(|i| phase_mixed_density(i as f64 * dx, 2.0, 1.0, 64) * dx)
            .sum();
        assert!((total - 1.0).abs() < 1e-9, "{total}");
        let g = (-0.5f64 * 0.49).exp() / TAU.sqrt();
        assert!((phase_mixed_density(0.7, 1.0, 1.0, 64) - g).abs() < 1e-15);
    }

    #[test]
    fn histogram_counts_everything() {
        let values: Vec<f64> = (0..1000).map(|i| ((i as f64) * 0.37).sin()).collect();
        let table = histogram_table("# t\n", &values, 20, None);
        let counted: u64 = table
            .lines()
            .filter(|l| !l.starts_with('#') && !l.starts_with("bin_low"))
            .map(|l| l.split('\t').nth(3).unwrap().parse::<u64>().unwrap())
            .sum();
        let outside: u64 = table
            .lines()
            .nth(1)
            .unwrap()
            .rsplit('=')
            .next()
            .unwrap()
            .parse()
            .unwrap();
        assert_eq!(counted + outside, 1000);
        assert_eq!(table.lines().count(), 2 + 1 + 20);
    }
}
