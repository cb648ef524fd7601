use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::rng::{chunked, stream};
use crate::error::{Error, Result};

/// Behaviour of the relative phase θ between the local oscillator and the
/// electronic reference across samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhaseMixingModel {
    Locked {
        theta: f64,
    },
    /// θ independent and uniform on `[0, 2π)` for every sample.
    UniformPerSample {},
    /// θ performs a Gaussian random walk, one step per sample.
    RandomWalk {
        step_stddev: f64,
        initial_theta: f64,
    },
}

impl Default for PhaseMixingModel {
    fn default() -> Self {
        PhaseMixingModel::UniformPerSample {}
    }
}

impl PhaseMixingModel {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PhaseMixingModel::Locked { theta } if !theta.is_finite() => Err(Error::invalid("locked phase must be finite")),
            PhaseMixingModel::RandomWalk {
                step_stddev,
                initial_theta,
            } if !(step_stddev.is_finite() && step_stddev >= 0.0 && initial_theta.is_finite()) => Err(
                Error::invalid("random-walk step must be finite and >= 0, initial phase finite"),
            ),
            _ => Ok(()),
        }
    }

    /// The phase of every sample.
    pub fn phases(&self, n: usize, seed: u64) -> Result<Vec<f64>> {
        self.validate()?;
        Ok(match *self {
            PhaseMixingModel::Locked { theta } => vec![theta; n],
            PhaseMixingModel::UniformPerSample {} => chunked(n, seed, "phases", |rng, _, buf: &mut [f64]| {
                for t in buf {
                    *t = rng.random::<f64>() * TAU;
                }
            }),
            PhaseMixingModel::RandomWalk {
                step_stddev,
                initial_theta,
            } => {
                // sequential by nature; one stream for the whole walk
                let mut rng = stream(seed, "phase-walk", 0);
                let mut theta = initial_theta;
                (0..n)
                    .map(|_| {
                        let here = theta;
                        theta = (theta + step_stddev * rng.sample::<f64, _>(StandardNormal)).rem_euclid(TAU);
                        here
                    })
                    .collect()
            }
        })
    }
}

/// `I_θ = cos θ I_cos + sin θ I_sin` with θ drawn per `model`.
pub fn phase_mix(pairs: &[[f64; 2]], model: &PhaseMixingModel, seed: u64) -> Result<Vec<f64>> {
    let phases = model.phases(pairs.len(), seed)?;
    Ok(pairs
        .iter()
        .zip(&phases)
        .map(|(p, &t)| {
            if t == 0.0 {
                // keep Locked(0) an exact pass-through
                p[0]
            } else {
                let (s, c) = t.sin_cos();
                c * p[0] + s * p[1]
            }
        })
        .collect())
}

/// `(I_θ, I_{θ+π/2})` sharing the same θ per sample.
pub fn phase_mix_quadrature_pair(pairs: &[[f64; 2]], model: &PhaseMixingModel, seed: u64) -> Result<Vec<[f64; 2]>> {
    let phases = model.phases(pairs.len(), seed)?;
    Ok(pairs
        .iter()
        .zip(&phases)
        .map(|(p, &t)| {
            let (s, c) = t.sin_cos();
            [c * p[0] + s * p[1], -s * p[0] + c * p[1]]
        })
        .collect())
}
