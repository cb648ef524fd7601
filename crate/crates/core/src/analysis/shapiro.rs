//! Shapiro–Wilk W test with Royston's approximation of the coefficients and
//! of the null distribution of W (valid for 3 ≤ n ≤ 5000).

use rand::seq::index::sample;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::sim::rng::stream;

pub const SHAPIRO_MAX_N: usize = 5000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapiroWilk {
    pub w: f64,
    pub p_value: f64,
    /// Samples entering the statistic.
    pub n_used: usize,
    /// Seed of the subsample when the input exceeded [`SHAPIRO_MAX_N`].
    pub subsample_seed: Option<u64>,
}

fn poly(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

/// W and its upper-tail p-value. Inputs longer than [`SHAPIRO_MAX_N`] are
/// reduced to a subsample without replacement drawn from `seed`.
pub fn shapiro_wilk(samples: &[f64], seed: u64) -> Result<ShapiroWilk> {
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("samples must be finite"));
    }
    let (mut x, subsample_seed) = if samples.len() > SHAPIRO_MAX_N {
        let mut rng = stream(seed, "shapiro-subsample", 0);
        let idx = sample(&mut rng, samples.len(), SHAPIRO_MAX_N);
        (idx.iter().map(|i| samples[i]).collect::<Vec<_>>(), Some(seed))
    } else {
        (samples.to_vec(), None)
    };
    let n = x.len();
    if n < 3 {
        return Err(Error::InsufficientSamples {
            required: 3,
            available: n,
        });
    }
    x.sort_by(f64::total_cmp);
    if x[n - 1] - x[0] <= 0.0 {
        return Err(Error::ZeroVariance);
    }

    let half = n / 2;
    let an = n as f64;
    let mut a = vec![0.0; half];
    if n == 3 {
        a[0] = std::f64::consts::FRAC_1_SQRT_2;
    } else {
        const C1: [f64; 6] = [0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056];
        const C2: [f64; 6] = [0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633];
        let normal = Normal::standard();
        let m: Vec<f64> = (1..=half)
            .map(|i| normal.inverse_cdf((i as f64 - 0.375) / (an + 0.25)))
            .collect();
        let summ2 = 2.0 * m.iter().map(|v| v * v).sum::<f64>();
        let ssumm2 = summ2.sqrt();
        let rsn = 1.0 / an.sqrt();
        let a1 = poly(&C1, rsn) - m[0] / ssumm2;
        let (first, fac) = if n > 5 {
            let a2 = -m[1] / ssumm2 + poly(&C2, rsn);
            let fac = ((summ2 - 2.0 * m[0] * m[0] - 2.0 * m[1] * m[1]) / (1.0 - 2.0 * a1 * a1 - 2.0 * a2 * a2)).sqrt();
            a[1] = a2;
            (2, fac)
        } else {
            let fac = ((summ2 - 2.0 * m[0] * m[0]) / (1.0 - 2.0 * a1 * a1)).sqrt();
            (1, fac)
        };
        a[0] = a1;
        for i in first..half {
            a[i] = -m[i] / fac;
        }
    }

    let mean = x.iter().sum::<f64>() / an;
    let ssq: f64 = x.iter().map(|v| (v - mean) * (v - mean)).sum();
    let b: f64 = (0..half).map(|i| a[i] * (x[n - 1 - i] - x[i])).sum();
    let w = (b * b / ssq).min(1.0);

    let p_value = if n == 3 {
        let pi6 = 6.0 / std::f64::consts::PI;
        let stqr = std::f64::consts::FRAC_PI_3;
        (pi6 * (w.sqrt().asin() - stqr)).max(0.0)
    } else {
        let y = (1.0 - w).ln();
        let (y, mu, sigma) = if n <= 11 {
            let gamma = poly(&[-2.273, 0.459], an);
            if y >= gamma {
                return Ok(ShapiroWilk {
                    w,
                    p_value: 1e-99,
                    n_used: n,
                    subsample_seed,
                });
            }
            let y = -(gamma - y).ln();
            let mu = poly(&[0.5440, -0.39978, 0.025054, -6.714e-4], an);
            let sigma = poly(&[1.3822, -0.77857, 0.062767, -0.0020322], an).exp();
            (y, mu, sigma)
        } else {
            let ln_n = an.ln();
            let mu = poly(&[-1.5861, -0.31082, -0.083751, 0.0038915], ln_n);
            let sigma = poly(&[-0.4803, -0.082676, 0.0030302], ln_n).exp();
            (y, mu, sigma)
        };
        1.0 - Normal::new(mu, sigma).expect("positive sigma").cdf(y)
    };
    Ok(ShapiroWilk {
        w,
        p_value,
        n_used: n,
        subsample_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_identical_values_have_zero_variance() {
        assert!(matches!(shapiro_wilk(&[1.0, 1.0, 1.0], 0), Err(Error::ZeroVariance)));
    }

    #[test]
    fn too_few_samples() {
        assert!(matches!(shapiro_wilk(&[1.0, 2.0], 0), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn three_points_exact_distribution() {
        // evenly spaced triples give W = 1 and p = 1
        let r = shapiro_wilk(&[1.0, 2.0, 3.0], 0).unwrap();
        assert!((r.w - 1.0).abs() < 1e-12);
        assert!((r.p_value - 1.0).abs() < 1e-9);
    }

    #[test]
    fn reference_values() {
        // values from an independent implementation of the same algorithm,
        // which works in single precision
        let cases: [(&[f64], f64, f64); 4] = [
            (&[148.0, 154.0, 158.0, 160.0, 161.0, 162.0, 166.0, 170.0, 182.0, 195.0, 236.0], 0.788815, 0.006704),
            (&[1.0, 2.0, 4.0], 0.964286, 0.636887),
            (&[0.1, 0.5, 0.9, 1.7, 2.0], 0.944393, 0.697138),
            (&[], 0.980187, 0.696497),
        ];
        let wavy: Vec<f64> = (0..40).map(|i| (i as f64 * 1.3).sin() + 0.1 * i as f64).collect();
        for (x, w, p) in cases {
            let x = if x.is_empty() { &wavy[..] } else { x };
            let r = shapiro_wilk(x, 0).unwrap();
            assert!((r.w - w).abs() < 2e-5, "{r:?} vs {w}");
            assert!((r.p_value - p).abs() < 2e-4, "{r:?} vs {p}");
        }
    }

    #[test]
    fn large_inputs_are_subsampled_reproducibly() {
        let xs: Vec<f64> = (0..12_000).map(|i| (i * 7919 % 12_000) as f64 / 12_000.0 - 0.5).collect();
        let a = shapiro_wilk(&xs, 5).unwrap();
        let b = shapiro_wilk(&xs, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_used, SHAPIRO_MAX_N);
        assert_eq!(a.subsample_seed, Some(5));
        assert!(a.p_value < 1e-3);
    }
}
