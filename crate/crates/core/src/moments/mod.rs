//! Moment algebra of the phase-mixed photocurrent.
//!
//! The measured photocurrent is `I_θ = cos θ I_cos + sin θ I_sin` with θ
//! uniformly mixed, so every measured moment is a θ-average of moments of the
//! two phase-locked components. Everything here is a pure function; the
//! expansion coefficients are exact rationals and only become `f64` when they
//! multiply component moments.

mod components;
pub mod exact;

use std::collections::BTreeMap;

use num::{BigRational, Zero};
use serde::{Deserialize, Serialize};

pub use components::{isserlis_moment, ComponentStats, MAX_JOINT_ORDER};
pub use exact::{dnk_coefficient, phase_average_weight, MAX_PHASE_ORDER};

use crate::error::{Error, Result};
use exact::{binomial, constraint_prefactor, mixed_expansion_weight, odd_double_factorial, to_f64};

/// `(2n-1)!! s^{2n}`.
pub fn gaussian_central_moment(n: u32, s: f64) -> Result<f64> {
    if !(s.is_finite() && s >= 0.0) {
        return Err(Error::invalid(format!("standard deviation must be finite and >= 0, got {s}")));
    }
    Ok(to_f64(&BigRational::from_integer(odd_double_factorial(n))) * s.powi(2 * n as i32))
}

/// Phase average of `cos^p θ sin^q θ` for arbitrary powers; zero when either
/// power is odd.
fn phase_average_any(p: u32, q: u32) -> Result<BigRational> {
    if p % 2 == 1 || q % 2 == 1 {
        return Ok(BigRational::zero());
    }
    phase_average_weight(p / 2, q / 2)
}

/// θ-average of `<(dI_θ)^order>` for any order. Odd orders vanish term by term
/// and never touch the component moments.
pub fn mixed_moment(order: u32, stats: &ComponentStats) -> Result<f64> {
    let mut total = 0.0;
    for p in 0..=order {
        let w = phase_average_any(p, order - p)?;
        if w.is_zero() {
            continue;
        }
        let coeff = w * BigRational::from_integer(binomial(order, p));
        total += to_f64(&coeff) * stats.joint_moment(p, order - p)?;
    }
    Ok(total)
}

/// `σ^{2n}`: the θ-averaged moment of order `2n`,
/// `Σ_k binom(2n,2k) w(k, n-k) <I_cos^{2k} I_sin^{2(n-k)}>`.
pub fn mixed_moment_from_components(n: u32, stats: &ComponentStats) -> Result<f64> {
    mixed_moment(2 * n, stats)
}

/// `δ^{2n} = σ^{2n} - (2n-1)!! s^{2n}`.
pub fn gaussian_deviation(n: u32, sigma2n: f64, s: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("deviation order n must be >= 1"));
    }
    if !sigma2n.is_finite() {
        return Err(Error::invalid("measured moment must be finite"));
    }
    Ok(sigma2n - gaussian_central_moment(n, s)?)
}

/// State deviation `δ_{2a,2b} = <I_cos^{2a} I_sin^{2b}> - (2a-1)!!(2b-1)!! s_cos^{2a} s_sin^{2b}`.
///
/// The `(1,1)` case uses the correlated reference `(1+2c²) s_cos² s_sin²`.
/// Any other mixed case needs `c = 0`; pure cases (`a = 0` or `b = 0`) do not
/// depend on `c`.
pub fn joint_gaussian_deviation(a: u32, b: u32, joint_moment: f64, stats: &ComponentStats) -> Result<f64> {
    let (sc2, ss2, c) = (stats.s_cos().powi(2), stats.s_sin().powi(2), stats.c());
    let reference = if (a, b) == (1, 1) {
        (1.0 + 2.0 * c * c) * sc2 * ss2
    } else {
        if a > 0 && b > 0 && c != 0.0 {
            return Err(Error::CorrelatedUnsupported {
                c,
                what: "joint deviations beyond fourth order",
            });
        }
        let df = to_f64(&BigRational::from_integer(
            odd_double_factorial(a) * odd_double_factorial(b),
        ));
        df * sc2.powi(a as i32) * ss2.powi(b as i32)
    };
    Ok(joint_moment - reference)
}

/// Both sides of the fourth-order identity linking photocurrent and state
/// deviations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourthOrderIdentity {
    /// `δ = σ⁴ - 3 s⁴`.
    pub delta: f64,
    /// `(8/3) δ`.
    pub lhs: f64,
    /// `δ_cos + δ_sin + 2 δ_c + (s_cos² - s_sin²)² + 4 c² s_cos² s_sin²`.
    pub rhs: f64,
    pub residual: f64,
}

pub fn fourth_order_identity(stats: &ComponentStats) -> Result<FourthOrderIdentity> {
    let s = stats.mixed_std();
    let delta = gaussian_deviation(2, mixed_moment_from_components(2, stats)?, s)?;
    let d_cos = joint_gaussian_deviation(2, 0, stats.joint_moment(4, 0)?, stats)?;
    let d_sin = joint_gaussian_deviation(0, 2, stats.joint_moment(0, 4)?, stats)?;
    let d_c = joint_gaussian_deviation(1, 1, stats.joint_moment(2, 2)?, stats)?;
    let (sc2, ss2, c) = (stats.s_cos().powi(2), stats.s_sin().powi(2), stats.c());
    let lhs = 8.0 / 3.0 * delta;
    let rhs = d_cos + d_sin + 2.0 * d_c + (sc2 - ss2).powi(2) + 4.0 * c * c * sc2 * ss2;
    Ok(FourthOrderIdentity {
        delta,
        lhs,
        rhs,
        residual: lhs - rhs,
    })
}

/// `(8/3)δ - [δ_cos + δ_sin + 2δ_c + (s_cos²-s_sin²)² + 4c²s_cos²s_sin²]`; zero
/// for any consistent statistics.
pub fn fourth_order_identity_residual(stats: &ComponentStats) -> Result<f64> {
    Ok(fourth_order_identity(stats)?.residual)
}

/// Both sides of the order-`2n` constraint for uncorrelated components:
///
/// `δ^{2n} - Σ_k W_{n,k} δ_{2(n-k),2k} = -((2n-1)!!/2^n) Σ_k d_{n,k} s_cos^{2(n-k)} s_sin^{2k}`
///
/// where `W_{n,k} = binom(2n,2k) w(n-k,k)` are the phase-average weights. The
/// left side is built from the mixed moment and the state deviations, the
/// right side only from `d_{n,k}` and the second moments.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSides {
    pub n: u32,
    pub lhs: f64,
    pub rhs: f64,
    /// `(2n-1)!! s^{2n}`, the natural magnitude for relative comparisons.
    pub scale: f64,
}

pub fn higher_order_constraint_residual(n: u32, stats: &ComponentStats) -> Result<ConstraintSides> {
    if n < 2 {
        return Err(Error::invalid("constraint order n must be >= 2"));
    }
    if stats.c() != 0.0 {
        return Err(Error::CorrelatedUnsupported {
            c: stats.c(),
            what: "higher-order constraints",
        });
    }
    let s = stats.mixed_std();
    let mut lhs = gaussian_deviation(n, mixed_moment_from_components(n, stats)?, s)?;
    for k in 0..=n {
        let (a, b) = (n - k, k);
        let dev = joint_gaussian_deviation(a, b, stats.joint_moment(2 * a, 2 * b)?, stats)?;
        lhs -= to_f64(&mixed_expansion_weight(a, b)?) * dev;
    }
    let (sc2, ss2) = (stats.s_cos().powi(2), stats.s_sin().powi(2));
    let pref = -to_f64(&constraint_prefactor(n));
    let mut rhs = 0.0;
    for k in 0..=n {
        rhs += to_f64(&dnk_coefficient(n, k)?) * sc2.powi((n - k) as i32) * ss2.powi(k as i32);
    }
    rhs *= pref;
    Ok(ConstraintSides {
        n,
        lhs,
        rhs,
        scale: gaussian_central_moment(n, s)?,
    })
}

/// Exact check that `Σ_k d_{n,k}` vanishes.
pub fn dnk_sum_is_zero(n: u32) -> Result<bool> {
    let mut sum = BigRational::zero();
    for k in 0..=n {
        sum += dnk_coefficient(n, k)?;
    }
    Ok(sum.is_zero())
}

/// Photocurrent and state deviations computed from one set of component
/// statistics.
#[derive(Clone, Debug, PartialEq)]
pub struct DeviationSet {
    /// `δ = σ⁴ - 3s⁴`.
    pub delta4: f64,
    pub delta_cos: f64,
    pub delta_sin: f64,
    pub delta_c: f64,
    /// `2n -> δ^{2n}`.
    pub photocurrent: BTreeMap<u32, f64>,
    /// `(2a, 2b) -> δ_{2a,2b}`; only filled for uncorrelated statistics.
    pub state: BTreeMap<(u32, u32), f64>,
}

impl DeviationSet {
    pub fn from_stats(stats: &ComponentStats, max_n: u32) -> Result<Self> {
        let s = stats.mixed_std();
        let mut photocurrent = BTreeMap::new();
        for n in 2..=max_n {
            photocurrent.insert(2 * n, gaussian_deviation(n, mixed_moment_from_components(n, stats)?, s)?);
        }
        let mut state = BTreeMap::new();
        if stats.c() == 0.0 {
            for n in 2..=max_n {
                for k in 0..=n {
                    let (a, b) = (n - k, k);
                    let dev = joint_gaussian_deviation(a, b, stats.joint_moment(2 * a, 2 * b)?, stats)?;
                    state.insert((2 * a, 2 * b), dev);
                }
            }
        }
        Ok(Self {
            delta4: photocurrent.get(&4).copied().unwrap_or(0.0),
            delta_cos: joint_gaussian_deviation(2, 0, stats.joint_moment(4, 0)?, stats)?,
            delta_sin: joint_gaussian_deviation(0, 2, stats.joint_moment(0, 4)?, stats)?,
            delta_c: joint_gaussian_deviation(1, 1, stats.joint_moment(2, 2)?, stats)?,
            photocurrent,
            state,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
    }

    #[test]
    fn gaussian_moments() {
        assert_eq!(gaussian_central_moment(2, 1.0).unwrap(), 3.0);
        assert_eq!(gaussian_central_moment(7, 1.0).unwrap(), 135135.0);
        assert_eq!(gaussian_central_moment(2, 2.0).unwrap(), 48.0);
        assert_eq!(gaussian_central_moment(0, 5.0).unwrap(), 1.0);
        assert!(gaussian_central_moment(2, -1.0).is_err());
    }

    #[test]
    fn mixed_moment_examples() {
        let asym = ComponentStats::gaussian(1.0, 2.0, 0.0).unwrap();
        assert!(close(mixed_moment_from_components(1, &asym).unwrap(), 2.5, 1e-15));
        assert!(close(mixed_moment_from_components(2, &asym).unwrap(), 22.125, 1e-15));
        let sym = ComponentStats::gaussian(1.0, 1.0, 0.0).unwrap();
        assert!(close(mixed_moment_from_components(2, &sym).unwrap(), 3.0, 1e-15));
    }

    #[test]
    fn odd_mixed_moments_vanish() {
        let s = ComponentStats::with_moments(1.0, 2.0, 0.3, [((3, 0), 0.7), ((2, 1), -0.4)]).unwrap();
        for order in [1, 3, 5, 7, 9] {
            assert_eq!(mixed_moment(order, &s).unwrap(), 0.0);
        }
    }

    #[test]
    fn non_gaussian_missing_moment_is_not_filled() {
        let s = ComponentStats::with_moments(1.0, 2.0, 0.0, [((4, 0), 2.0), ((0, 4), 40.0)]).unwrap();
        assert!(matches!(
            mixed_moment_from_components(2, &s),
            Err(Error::MissingMoment { a: 2, b: 2 })
        ));
    }

    #[test]
    fn deviation_examples() {
        assert_eq!(gaussian_deviation(2, 3.0, 1.0).unwrap(), 0.0);
        assert!(close(gaussian_deviation(2, 22.125, 2.5f64.sqrt()).unwrap(), 3.375, 1e-14));
        assert_eq!(gaussian_deviation(3, 15.0, 1.0).unwrap(), 0.0);
        assert!(gaussian_deviation(0, 1.0, 1.0).is_err());
    }

    #[test]
    fn joint_deviation_examples() {
        let s = ComponentStats::gaussian(1.0, 2.0, 0.0).unwrap();
        assert_eq!(joint_gaussian_deviation(1, 1, 4.0, &s).unwrap(), 0.0);
        let s = ComponentStats::gaussian(1.0, 7.0, 0.0).unwrap();
        assert_eq!(joint_gaussian_deviation(2, 0, 3.0, &s).unwrap(), 0.0);
        let s = ComponentStats::gaussian(1.0, 1.0, 0.5).unwrap();
        assert!(close(joint_gaussian_deviation(1, 1, 6.0, &s).unwrap(), 4.5, 1e-15));
        assert!(matches!(
            joint_gaussian_deviation(2, 1, 1.0, &s),
            Err(Error::CorrelatedUnsupported { .. })
        ));
        // pure moments do not care about c
        assert!(joint_gaussian_deviation(2, 0, 3.0, &s).is_ok());
    }

    #[test]
    fn fourth_order_identity_examples() {
        let id = fourth_order_identity(&ComponentStats::gaussian(1.0, 2.0, 0.0).unwrap()).unwrap();
        assert!(id.residual.abs() < 1e-12);
        assert!(close(id.lhs, 9.0, 1e-14));

        let id = fourth_order_identity(&ComponentStats::gaussian(1.0, 1.0, 0.0).unwrap()).unwrap();
        assert!(id.residual.abs() < 1e-12);
        assert!(id.delta.abs() < 1e-14);

        let id = fourth_order_identity(&ComponentStats::gaussian(1.0, 1.0, 0.5).unwrap()).unwrap();
        assert!(id.residual.abs() < 1e-12);
        assert!(close(id.delta, 0.375, 1e-14));
    }

    #[test]
    fn fourth_order_identity_needs_moments() {
        let s = ComponentStats::with_moments(1.0, 2.0, 0.0, [((4, 0), 2.0)]).unwrap();
        assert!(fourth_order_identity_residual(&s).is_err());
    }

    #[test]
    fn fourth_order_identity_holds_for_non_gaussian_tables() {
        let s = ComponentStats::with_moments(
            1.0,
            2.0,
            0.0,
            [((4, 0), 2.2), ((0, 4), 40.0), ((2, 2), 3.1)],
        )
        .unwrap();
        assert!(fourth_order_identity_residual(&s).unwrap().abs() < 1e-12);
    }

    #[test]
    fn constraint_examples() {
        let sym = ComponentStats::gaussian(1.3, 1.3, 0.0).unwrap();
        let c = higher_order_constraint_residual(2, &sym).unwrap();
        assert!(c.lhs.abs() < 1e-12 && c.rhs.abs() < 1e-12);

        let asym = ComponentStats::gaussian(1.0, 2.0, 0.0).unwrap();
        let c = higher_order_constraint_residual(2, &asym).unwrap();
        assert!(close(c.lhs, 3.375, 1e-13), "{c:?}");
        assert!(close(c.rhs, 3.375, 1e-13), "{c:?}");

        let c = higher_order_constraint_residual(3, &asym).unwrap();
        assert!(c.rhs.abs() > 1.0);
        assert!(close(c.lhs, c.rhs, 1e-12));

        let corr = ComponentStats::gaussian(1.0, 2.0, 0.1).unwrap();
        assert!(higher_order_constraint_residual(3, &corr).is_err());
    }

    #[test]
    fn dnk_sums() {
        for n in 2..=10 {
            assert!(dnk_sum_is_zero(n).unwrap());
        }
    }

    #[test]
    fn deviation_set_is_zero_for_symmetric_gaussian() {
        let d = DeviationSet::from_stats(&ComponentStats::gaussian(1.7, 1.7, 0.0).unwrap(), 7).unwrap();
        let scale = gaussian_central_moment(7, 1.7).unwrap();
        assert!(d.delta4.abs() < 1e-12);
        for v in d.photocurrent.values().chain(d.state.values()) {
            assert!(v.abs() <= 1e-12 * scale, "{v}");
        }
    }
}
