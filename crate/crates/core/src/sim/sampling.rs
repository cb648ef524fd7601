use nalgebra::{Matrix2, Matrix4, SymmetricEigen, Vector2, Vector4};
use rand::Rng;
use rand_distr::StandardNormal;

use super::rng::chunked;
use crate::error::{Error, Result};
use crate::state::{ComponentLaw, MeasurementModel, StateModel};

/// Symmetric square root `L` with `L Lᵀ = V`; tiny negative eigenvalues from
/// rounding are clipped to zero.
fn sqrt_psd4(v: &Matrix4<f64>) -> Matrix4<f64> {
    let eig = SymmetricEigen::new(*v);
    let d = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    eig.eigenvectors * Matrix4::from_diagonal(&d)
}

fn sqrt_psd2(v: &Matrix2<f64>) -> Matrix2<f64> {
    let eig = SymmetricEigen::new(*v);
    let d = eig.eigenvalues.map(|x| x.max(0.0).sqrt());
    eig.eigenvectors * Matrix2::from_diagonal(&d)
}

fn normal4<R: Rng>(rng: &mut R) -> Vector4<f64> {
    Vector4::from_fn(|_, _| rng.sample(StandardNormal))
}

fn draw_component<R: Rng>(law: &ComponentLaw, rng: &mut R) -> f64 {
    match *law {
        ComponentLaw::Gaussian { sd } => sd * rng.sample::<f64, _>(StandardNormal),
        ComponentLaw::UniformPlusGaussian { half_width, gaussian_sd } => {
            let u: f64 = rng.random_range(-1.0..1.0);
            half_width * u + gaussian_sd * rng.sample::<f64, _>(StandardNormal)
        }
    }
}

/// Zero-mean quadrature vectors `(p_s, q_s, p_a, q_a)`. Component-level states
/// have no quadratures and are rejected; use [`sample_components`].
pub fn sample_quadratures(state: &StateModel, n: usize, seed: u64) -> Result<Vec<[f64; 4]>> {
    state.validate()?;
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    match state {
        StateModel::Gaussian { covariance } => {
            let l = sqrt_psd4(covariance.matrix());
            Ok(chunked(n, seed, "quadratures", |rng, _, buf: &mut [[f64; 4]]| {
                for x in buf {
                    *x = (l * normal4(rng)).into();
                }
            }))
        }
        StateModel::GaussianMixture { weights, components } => {
            let roots: Vec<_> = components.iter().map(|v| sqrt_psd4(v.matrix())).collect();
            let mut cumulative = Vec::with_capacity(weights.len());
            let mut acc = 0.0;
            for w in weights {
                acc += w;
                cumulative.push(acc);
            }
            Ok(chunked(n, seed, "quadratures", |rng, _, buf: &mut [[f64; 4]]| {
                for x in buf {
                    let u: f64 = rng.random::<f64>() * acc;
                    let i = cumulative.partition_point(|&c| c <= u).min(roots.len() - 1);
                    *x = (roots[i] * normal4(rng)).into();
                }
            }))
        }
        _ => Err(Error::invalid(
            "component-level states have no quadrature representation; sample their components instead",
        )),
    }
}

/// Per-sample map to `(I_cos, I_sin)`. When the model adds noise (resonator
/// loss), it is drawn from a stream keyed by `seed`.
pub fn apply_measurement(samples: &[[f64; 4]], m: &MeasurementModel, seed: u64) -> Result<Vec<[f64; 2]>> {
    m.validate()?;
    let response = m.response();
    let gain = response.gain;
    let noise = if response.added_noise.abs().max() > 0.0 {
        Some(sqrt_psd2(&response.added_noise))
    } else {
        None
    };
    Ok(chunked(samples.len(), seed, "ingress", |rng, range, buf: &mut [[f64; 2]]| {
        for (out, x) in buf.iter_mut().zip(&samples[range]) {
            let mut y = gain * Vector4::from(*x);
            if let Some(l) = noise {
                y += l * Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
            }
            *out = y.into();
        }
    }))
}

/// `(I_cos, I_sin)` pairs for any state: through the quadratures and `m` for
/// quadrature-level states, drawn directly for component-level ones.
pub fn sample_components(state: &StateModel, m: &MeasurementModel, n: usize, seed: u64) -> Result<Vec<[f64; 2]>> {
    state.validate()?;
    if n == 0 {
        return Err(Error::invalid("sample count must be at least 1"));
    }
    match state {
        StateModel::Gaussian { .. } | StateModel::GaussianMixture { .. } => {
            let quads = sample_quadratures(state, n, seed)?;
            apply_measurement(&quads, m, seed)
        }
        StateModel::ComponentGaussian { stats } => {
            let cov = stats.covariance();
            let l = sqrt_psd2(&Matrix2::new(cov[0][0], cov[0][1], cov[1][0], cov[1][1]));
            Ok(chunked(n, seed, "components", |rng, _, buf: &mut [[f64; 2]]| {
                for x in buf {
                    *x = (l * Vector2::new(rng.sample(StandardNormal), rng.sample(StandardNormal))).into();
                }
            }))
        }
        StateModel::Engineered { law } => Ok(chunked(n, seed, "components", |rng, _, buf: &mut [[f64; 2]]| {
            for x in buf {
                *x = [draw_component(law.cos_law(), rng), draw_component(law.sin_law(), rng)];
            }
        })),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::TwoModeCovariance;

    fn sample_cov4(xs: &[[f64; 4]]) -> Matrix4<f64> {
        let n = xs.len() as f64;
        xs.iter()
            .fold(Matrix4::zeros(), |acc, x| acc + Vector4::from(*x) * Vector4::from(*x).transpose())
            / n
    }

    #[test]
    fn vacuum_sample_covariance() {
        let xs = sample_quadratures(&StateModel::gaussian(TwoModeCovariance::vacuum()), 1_000_000, 11).unwrap();
        let err = (sample_cov4(&xs) - Matrix4::identity()).abs().max();
        assert!(err < 5e-3, "{err}");
    }

    #[test]
    fn same_seed_same_stream() {
        let state = StateModel::gaussian(TwoModeCovariance::vacuum());
        let a = sample_quadratures(&state, 70_000, 3).unwrap();
        let b = sample_quadratures(&state, 70_000, 3).unwrap();
        let c = sample_quadratures(&state, 70_000, 4).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn mixture_covariance_is_average() {
        let v1 = TwoModeCovariance::vacuum();
        let v2 = TwoModeCovariance::from_rows([
            [4.0, 0.0, 0.0, 0.0],
            [0.0, 0.25, 0.0, 0.0],
            [0.0, 0.0, 2.0, 0.0],
            [0.0, 0.0, 0.0, 2.0],
        ])
        .unwrap();
        let state = StateModel::mixture(vec![0.5, 0.5], vec![v1, v2]).unwrap();
        let xs = sample_quadratures(&state, 1_000_000, 5).unwrap();
        let want = (v1.matrix() + v2.matrix()) * 0.5;
        let err = (sample_cov4(&xs) - want).abs().max();
        assert!(err < 0.02, "{err}");
    }

    #[test]
    fn zero_measurement_gives_zero_pairs() {
        let xs = sample_quadratures(&StateModel::gaussian(TwoModeCovariance::vacuum()), 100, 1).unwrap();
        let pairs = apply_measurement(&xs, &MeasurementModel::explicit(nalgebra::Matrix2x4::zeros()), 1).unwrap();
        assert!(pairs.iter().all(|p| *p == [0.0, 0.0]));
    }

    #[test]
    fn homodyne_row_extraction_variances() {
        let v = TwoModeCovariance::from_rows([
            [1.0, 0.0, 0.0, 0.0],
            [0.0, 1.0, 0.0, 0.0],
            [0.0, 0.0, 4.0, 0.0],
            [0.0, 0.0, 0.0, 4.0],
        ])
        .unwrap();
        let pairs = sample_components(&StateModel::gaussian(v), &MeasurementModel::homodyne(0.0), 400_000, 2).unwrap();
        let n = pairs.len() as f64;
        let vc = pairs.iter().map(|p| p[0] * p[0]).sum::<f64>() / n;
        let vs = pairs.iter().map(|p| p[1] * p[1]).sum::<f64>() / n;
        assert!((vc - 1.0).abs() < 0.01 && (vs - 4.0).abs() < 0.04, "{vc} {vs}");
    }
}
