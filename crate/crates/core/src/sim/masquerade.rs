//! Non-Gaussian component laws whose phase-mixed fourth moment is exactly the
//! Gaussian value.

use crate::error::{Error, Result};
use crate::state::{ComponentLaw, EngineeredLaw, StateModel};

/// Fourth cumulant of `U(-a, a)` per unit `a⁴`.
const UNIFORM_K4: f64 = -2.0 / 15.0;

/// Engineered state with component variances `(s_cos², s_sin²)` whose
/// fourth-order deviations cancel the mixing asymmetry:
/// `δ_cos + δ_sin + 2δ_c = -(s_cos² - s_sin²)²`.
///
/// Each component is an independent uniform plus Gaussian, with the same
/// fraction `u` of its variance carried by the uniform term. Independence
/// gives `δ_c = 0`, and the uniform terms give
/// `δ_cos + δ_sin = -1.2 u² (s_cos⁴ + s_sin⁴)`, so `u` follows in closed form.
pub fn build_masquerade_state(s_cos: f64, s_sin: f64, c: f64) -> Result<StateModel> {
    if !(s_cos.is_finite() && s_sin.is_finite() && s_cos >= 0.0 && s_sin >= 0.0) {
        return Err(Error::invalid("standard deviations must be finite and >= 0"));
    }
    if c != 0.0 {
        return Err(Error::CorrelatedUnsupported {
            c,
            what: "masquerade construction",
        });
    }
    let (v_cos, v_sin) = (s_cos * s_cos, s_sin * s_sin);
    let required = (v_cos - v_sin).powi(2);
    let quartic = v_cos * v_cos + v_sin * v_sin;
    if required <= 1e-12 * quartic.max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate(
            "equal component variances already give a Gaussian fourth moment".into(),
        ));
    }
    // a uniform variable has variance a²/3, so a⁴ = 9 u² v²
    let reachable = -UNIFORM_K4 * 9.0 * quartic;
    let u = (required / reachable).sqrt();
    if u > 1.0 {
        return Err(Error::Infeasible { required, reachable });
    }
    let law = |v: f64| ComponentLaw::UniformPlusGaussian {
        half_width: (3.0 * u * v).sqrt(),
        gaussian_sd: ((1.0 - u) * v).sqrt(),
    };
    Ok(StateModel::Engineered {
        law: EngineeredLaw::independent(law(v_cos), law(v_sin))?,
    })
}
