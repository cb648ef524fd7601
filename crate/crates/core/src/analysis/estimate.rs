//! Central moments with bootstrap or influence-function uncertainties.

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::rng::stream;

/// Highest central moment order estimated from samples.
pub const MAX_ESTIMATE_ORDER: u32 = 14;

pub const DEFAULT_BOOTSTRAP_ROUNDS: usize = 200;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMethod {
    /// Plug-in moments, standard errors from the empirical influence function.
    Plugin,
    Bootstrap,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentEstimate {
    pub order: u32,
    pub value: f64,
    pub std_error: f64,
    pub method: EstimateMethod,
    pub n_samples: usize,
}

/// Sampling spread of the full moment vector `(1, 0, m_2, ..., m_max)`.
#[derive(Clone, Debug, PartialEq)]
enum Spread {
    Replicates(Vec<Vec<f64>>),
    /// Covariance of `(m_2, ..., m_max)`.
    Covariance(DMatrix<f64>),
}

/// Central moments of orders `2..=max_order` of one sample set.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentEstimates {
    pub n_samples: usize,
    pub mean: f64,
    pub method: EstimateMethod,
    pub bootstrap_rounds: usize,
    pub seed: u64,
    pub estimates: Vec<MomentEstimate>,
    #[serde(skip)]
    spread: Spread,
}

fn binomial_row(k: usize) -> Vec<f64> {
    let mut row = vec![1.0; k + 1];
    for j in 1..k {
        row[j] = row[j - 1] * (k - j + 1) as f64 / j as f64;
    }
    row
}

/// Central moments `(1, 0, m_2, ...)` from power sums `s[j] = Σ (x - c)^j`.
fn central_from_power_sums(s: &[f64], n: f64) -> Vec<f64> {
    let max = s.len() - 1;
    let raw: Vec<f64> = s.iter().map(|v| v / n).collect();
    let d = raw[1];
    let mut out = vec![0.0; max + 1];
    out[0] = 1.0;
    for (k, slot) in out.iter_mut().enumerate().skip(2) {
        let binom = binomial_row(k);
        let mut acc = 0.0;
        for j in 0..=k {
            acc += binom[j] * raw[j] * (-d).powi((k - j) as i32);
        }
        *slot = acc;
    }
    out
}

fn power_sums(values: impl Iterator<Item = f64>, center: f64, max: usize) -> Vec<f64> {
    let mut s = vec![0.0; max + 1];
    for x in values {
        let d = x - center;
        let mut p = 1.0;
        for slot in s.iter_mut() {
            *slot += p;
            p *= d;
        }
    }
    s
}

fn validate_samples(samples: &[f64], max_order: u32) -> Result<()> {
    if max_order < 2 {
        return Err(Error::invalid("max_order must be at least 2"));
    }
    if max_order > MAX_ESTIMATE_ORDER {
        return Err(Error::OrderTooHigh {
            order: max_order,
            max: MAX_ESTIMATE_ORDER,
        });
    }
    let required = 30.max(2 * max_order as usize);
    if samples.len() < required {
        return Err(Error::InsufficientSamples {
            required,
            available: samples.len(),
        });
    }
    if samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("samples must be finite"));
    }
    Ok(())
}

/// Central moments of orders `2..=max_order`. With `bootstrap_rounds > 0` the
/// standard errors come from that many resamples with replacement, drawn from
/// streams keyed by `seed`; with zero rounds they come from the influence
/// function.
pub fn estimate_moments(samples: &[f64], max_order: u32, bootstrap_rounds: usize, seed: u64) -> Result<MomentEstimates> {
    validate_samples(samples, max_order)?;
    let n = samples.len();
    let max = max_order as usize;
    let mean = samples.iter().sum::<f64>() / n as f64;
    let point = central_from_power_sums(&power_sums(samples.iter().copied(), mean, max), n as f64);

    let (method, spread) = if bootstrap_rounds > 0 {
        let replicates: Vec<Vec<f64>> = (0..bootstrap_rounds)
            .into_par_iter()
            .map(|round| {
                let mut rng = stream(seed, "bootstrap", round as u64);
                let draws = (0..n).map(|_| samples[rng.random_range(0..n)]);
                central_from_power_sums(&power_sums(draws, mean, max), n as f64)
            })
            .collect();
        (EstimateMethod::Bootstrap, Spread::Replicates(replicates))
    } else {
        (EstimateMethod::Plugin, Spread::Covariance(influence_covariance(samples, mean, &point)))
    };

    let mut estimates = MomentEstimates {
        n_samples: n,
        mean,
        method,
        bootstrap_rounds,
        seed,
        estimates: Vec::new(),
        spread,
    };
    estimates.estimates = estimates.build(&point);
    Ok(estimates)
}

/// `Cov(m̂_j, m̂_k)` for `j, k >= 2` from the influence functions
/// `ψ_k(x) = (x-μ)^k - m_k - k m_{k-1} (x-μ)`.
fn influence_covariance(samples: &[f64], mean: f64, m: &[f64]) -> DMatrix<f64> {
    let max = m.len() - 1;
    let dim = max - 1;
    let mut acc = DMatrix::<f64>::zeros(dim, dim);
    let mut psi = vec![0.0; dim];
    for &x in samples {
        let d = x - mean;
        let mut p = d;
        for k in 2..=max {
            p *= d;
            psi[k - 2] = p - m[k] - k as f64 * m[k - 1] * d;
        }
        for i in 0..dim {
            for j in 0..=i {
                acc[(i, j)] += psi[i] * psi[j];
            }
        }
    }
    let n = samples.len() as f64;
    for i in 0..dim {
        for j in 0..i {
            acc[(j, i)] = acc[(i, j)];
        }
    }
    acc / (n * n)
}

impl MomentEstimates {
    pub fn max_order(&self) -> u32 {
        self.estimates.last().map_or(1, |e| e.order)
    }

    pub fn get(&self, order: u32) -> Option<&MomentEstimate> {
        self.estimates.iter().find(|e| e.order == order)
    }

    pub fn value(&self, order: u32) -> Option<f64> {
        self.get(order).map(|e| e.value)
    }

    /// `(1, 0, m_2, ..., m_max)`.
    pub fn full_vector(&self) -> Vec<f64> {
        let mut v = vec![1.0, 0.0];
        v.extend(self.estimates.iter().map(|e| e.value));
        v
    }

    fn build(&self, point: &[f64]) -> Vec<MomentEstimate> {
        let se = self.spread_std_errors(point);
        (2..point.len())
            .map(|k| MomentEstimate {
                order: k as u32,
                value: point[k],
                std_error: se[k],
                method: self.method,
                n_samples: self.n_samples,
            })
            .collect()
    }

    fn spread_std_errors(&self, point: &[f64]) -> Vec<f64> {
        match &self.spread {
            Spread::Replicates(reps) => (0..point.len())
                .map(|k| std_dev(reps.iter().map(|r| r[k])))
                .collect(),
            Spread::Covariance(c) => {
                let mut se = vec![0.0; point.len()];
                for k in 2..point.len() {
                    se[k] = c[(k - 2, k - 2)].max(0.0).sqrt();
                }
                se
            }
        }
    }

    /// Values and standard errors of an arbitrary function of the full moment
    /// vector. Bootstrap estimates apply `f` to every replicate; plug-in
    /// estimates use a numerical Jacobian.
    pub fn propagate<F>(&self, f: F) -> Vec<(f64, f64)>
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let point = self.full_vector();
        let value = f(&point);
        let se: Vec<f64> = match &self.spread {
            Spread::Replicates(reps) => {
                let mapped: Vec<Vec<f64>> = reps.iter().map(|r| f(r)).collect();
                (0..value.len()).map(|i| std_dev(mapped.iter().map(|m| m[i]))).collect()
            }
            Spread::Covariance(c) => {
                let j = jacobian(&f, &point, value.len());
                let cov = &j * c * j.transpose();
                (0..value.len()).map(|i| cov[(i, i)].max(0.0).sqrt()).collect()
            }
        };
        value.into_iter().zip(se).collect()
    }

    /// New estimates `g(m)` of the same orders, with the spread carried
    /// through `g`. `g` maps a full moment vector to a full moment vector.
    pub fn map<F>(&self, g: F) -> MomentEstimates
    where
        F: Fn(&[f64]) -> Vec<f64>,
    {
        let point = g(&self.full_vector());
        let spread = match &self.spread {
            Spread::Replicates(reps) => Spread::Replicates(reps.iter().map(|r| g(r)).collect()),
            Spread::Covariance(c) => {
                let j = jacobian(&g, &self.full_vector(), point.len());
                let jr = j.view((2, 0), (point.len() - 2, j.ncols())).into_owned();
                Spread::Covariance(&jr * c * jr.transpose())
            }
        };
        let mut out = MomentEstimates {
            n_samples: self.n_samples,
            mean: self.mean,
            method: self.method,
            bootstrap_rounds: self.bootstrap_rounds,
            seed: self.seed,
            estimates: Vec::new(),
            spread,
        };
        out.estimates = out.build(&point);
        out
    }
}

/// `∂f_i / ∂m_k` for `k >= 2`, by central differences.
fn jacobian<F>(f: &F, point: &[f64], out_len: usize) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    let dim = point.len() - 2;
    let mut j = DMatrix::zeros(out_len, dim);
    let mut x = point.to_vec();
    for k in 0..dim {
        let h = 1e-6 * point[k + 2].abs().max(1e-12);
        x[k + 2] = point[k + 2] + h;
        let up = f(&x);
        x[k + 2] = point[k + 2] - h;
        let down = f(&x);
        x[k + 2] = point[k + 2];
        for i in 0..out_len {
            j[(i, k)] = (up[i] - down[i]) / (2.0 * h);
        }
    }
    j
}

fn std_dev(xs: impl Iterator<Item = f64> + Clone) -> f64 {
    let n = xs.clone().count();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.clone().sum::<f64>() / n as f64;
    (xs.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64).sqrt()
}

/// `m_k / m_2^{k/2}`; not finite when `m_2 = 0`.
pub fn standardized(m: &[f64], order: usize) -> f64 {
    m[order] / m[2].powf(order as f64 / 2.0)
}
