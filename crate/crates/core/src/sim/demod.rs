//! Synthesis of the raw photocurrent around the analysis frequency and its
//! digital lock-in demodulation back to `(I_cos, I_sin)`.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::rng::chunked;
use crate::error::{Error, Result};

/// Stopband attenuation targeted by the filter design, in dB. The contract is
/// 40 dB at twice the passband edge; the extra margin absorbs truncation.
const DESIGN_ATTENUATION_DB: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DemodConfig {
    /// Ω / 2π in Hz.
    pub analysis_frequency: f64,
    /// Integration time T in seconds; the spectral resolution is 1/T.
    pub window_length: f64,
    /// Low-pass passband edge in Hz.
    pub lowpass_bandwidth: f64,
    pub sample_rate: f64,
}

impl Default for DemodConfig {
    fn default() -> Self {
        Self {
            analysis_frequency: 21e6,
            window_length: 5e-6,
            lowpass_bandwidth: 600e3,
            sample_rate: 100e6,
        }
    }
}

impl DemodConfig {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            self.analysis_frequency,
            self.window_length,
            self.lowpass_bandwidth,
            self.sample_rate,
        ];
        if fields.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::invalid("demodulation parameters must be finite and positive"));
        }
        if self.sample_rate <= 2.0 * self.analysis_frequency {
            return Err(Error::Aliasing {
                sample_rate: self.sample_rate,
                analysis_frequency: self.analysis_frequency,
            });
        }
        if self.window_samples() < 8 {
            return Err(Error::invalid(format!(
                "window holds {} samples, need at least 8",
                self.window_samples()
            )));
        }
        if 2.0 * self.lowpass_bandwidth >= self.analysis_frequency {
            return Err(Error::invalid("low-pass stopband must lie below the analysis frequency"));
        }
        Ok(())
    }

    pub fn window_samples(&self) -> usize {
        (self.window_length * self.sample_rate).round() as usize
    }

    /// ΔΩ / 2π = 1/T in Hz.
    pub fn resolution(&self) -> f64 {
        1.0 / self.window_length
    }
}

/// Additive background on the raw photocurrent.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackgroundNoise {
    #[default]
    None,
    /// White Gaussian noise with standard deviation `sd` per raw sample.
    White { sd: f64 },
}

fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let (mut term, mut sum, mut k) = (1.0, 1.0, 1.0);
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Linear-phase Kaiser-windowed sinc low-pass with unit DC gain.
#[derive(Clone, Debug, PartialEq)]
pub struct LowPassFilter {
    taps: Vec<f64>,
}

impl LowPassFilter {
    /// Passband edge `passband`, stopband edge `2·passband`.
    pub fn design(passband: f64, sample_rate: f64) -> Self {
        let a = DESIGN_ATTENUATION_DB;
        let beta = if a > 50.0 {
            0.1102 * (a - 8.7)
        } else {
            0.5842 * (a - 21.0).powf(0.4) + 0.07886 * (a - 21.0)
        };
        let transition = TAU * passband / sample_rate;
        let mut len = ((a - 8.0) / (2.285 * transition)).ceil() as usize + 1;
        if len % 2 == 0 {
            len += 1;
        }
        let mid = (len / 2) as f64;
        let fc = 1.5 * passband / sample_rate;
        let norm = bessel_i0(beta);
        let mut taps: Vec<f64> = (0..len)
            .map(|k| {
                let x = k as f64 - mid;
                let sinc = if x == 0.0 { 2.0 * fc } else { (TAU * fc * x).sin() / (PI * x) };
                let r = x / mid;
                sinc * bessel_i0(beta * (1.0 - r * r).max(0.0).sqrt()) / norm
            })
            .collect();
        let sum: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= sum);
        Self { taps }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    /// `|H(f)|` at frequency `f` for sample rate `fs`.
    pub fn gain(&self, f: f64, fs: f64) -> f64 {
        let w = TAU * f / fs;
        let (re, im) = self
            .taps
            .iter()
            .enumerate()
            .fold((0.0, 0.0), |(re, im), (k, h)| (re + h * (w * k as f64).cos(), im - h * (w * k as f64).sin()));
        re.hypot(im)
    }
}

/// One window's demodulation folded into two weight vectors: mixing with the
/// `2cos`/`2sin` references, "same"-length filtering with edge
/// renormalization, and averaging over the window are all linear.
#[derive(Clone, Debug)]
pub struct Demodulator {
    cfg: DemodConfig,
    filter: LowPassFilter,
    carrier_cos: Vec<f64>,
    carrier_sin: Vec<f64>,
    weight_cos: Vec<f64>,
    weight_sin: Vec<f64>,
}

impl Demodulator {
    pub fn new(cfg: DemodConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.window_samples();
        let filter = LowPassFilter::design(cfg.lowpass_bandwidth, cfg.sample_rate);
        let h = filter.taps();
        let half = h.len() / 2;

        // y_i = Σ_j h_j x_{i+half-j} / (sum of h over valid j); the window mean
        // of y is Σ_m g_m x_m.
        let mut g = vec![0.0; n];
        for i in 0..n {
            let lo = (i + half + 1).saturating_sub(n);
            let hi = (i + half).min(h.len() - 1);
            let norm: f64 = h[lo..=hi].iter().sum();
            for (j, hj) in h.iter().enumerate().take(hi + 1).skip(lo) {
                g[i + half - j] += hj / norm;
            }
        }
        g.iter_mut().for_each(|x| *x /= n as f64);

        let omega = TAU * cfg.analysis_frequency / cfg.sample_rate;
        let carrier_cos: Vec<f64> = (0..n).map(|m| (omega * m as f64).cos()).collect();
        let carrier_sin: Vec<f64> = (0..n).map(|m| (omega * m as f64).sin()).collect();
        let weight_cos = g.iter().zip(&carrier_cos).map(|(g, c)| 2.0 * g * c).collect();
        let weight_sin = g.iter().zip(&carrier_sin).map(|(g, s)| 2.0 * g * s).collect();
        Ok(Self {
            cfg,
            filter,
            carrier_cos,
            carrier_sin,
            weight_cos,
            weight_sin,
        })
    }

    pub fn config(&self) -> &DemodConfig {
        &self.cfg
    }

    pub fn filter(&self) -> &LowPassFilter {
        &self.filter
    }

    /// Raw photocurrent of one window carrying beat amplitudes `(I_cos, I_sin)`.
    pub fn synthesize(&self, pair: [f64; 2], out: &mut [f64]) {
        for ((o, c), s) in out.iter_mut().zip(&self.carrier_cos).zip(&self.carrier_sin) {
            *o = pair[0] * c + pair[1] * s;
        }
    }

    pub fn demodulate(&self, raw: &[f64]) -> Result<[f64; 2]> {
        if raw.len() != self.weight_cos.len() {
            return Err(Error::LengthMismatch {
                left: raw.len(),
                right: self.weight_cos.len(),
            });
        }
        let dot = |w: &[f64]| w.iter().zip(raw).map(|(a, b)| a * b).sum::<f64>();
        Ok([dot(&self.weight_cos), dot(&self.weight_sin)])
    }

    /// Variance that white background of standard deviation `sd` adds to each
    /// recovered component.
    pub fn background_variance(&self, noise: &BackgroundNoise) -> [f64; 2] {
        match *noise {
            BackgroundNoise::None => [0.0, 0.0],
            BackgroundNoise::White { sd } => {
                let ss = |w: &[f64]| w.iter().map(|x| x * x).sum::<f64>() * sd * sd;
                [ss(&self.weight_cos), ss(&self.weight_sin)]
            }
        }
    }
}

/// Synthesizes each pair as one window of raw photocurrent, adds background,
/// and demodulates it. Windows are independent.
pub fn synthesize_and_demodulate(
    pairs: &[[f64; 2]],
    cfg: &DemodConfig,
    noise: &BackgroundNoise,
    seed: u64,
) -> Result<Vec<[f64; 2]>> {
    if let BackgroundNoise::White { sd } = noise {
        if !(sd.is_finite() && *sd >= 0.0) {
            return Err(Error::invalid("background standard deviation must be finite and >= 0"));
        }
    }
    let demod = Demodulator::new(*cfg)?;
    let n = cfg.window_samples();
    Ok(chunked(pairs.len(), seed, "demod-background", |rng, range, buf: &mut [[f64; 2]]| {
        let mut raw = vec![0.0; n];
        for (out, pair) in buf.iter_mut().zip(&pairs[range]) {
            demod.synthesize(*pair, &mut raw);
            if let BackgroundNoise::White { sd } = *noise {
                raw.iter_mut().for_each(|r| *r += sd * rng.sample::<f64, _>(StandardNormal));
            }
            *out = demod.demodulate(&raw).expect("window length fixed by config");
        }
    }))
}
