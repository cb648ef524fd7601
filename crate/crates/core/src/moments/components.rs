use std::collections::BTreeMap;

use num::{BigInt, ToPrimitive};
use serde::{Deserialize, Serialize};

use super::exact::{binomial, double_factorial, factorial};
use crate::error::{Error, Result};

/// Highest total order `a + b` accepted in a declared joint-moment table.
pub const MAX_JOINT_ORDER: u32 = 14;

const CONSISTENCY_RTOL: f64 = 1e-9;

/// Second-order description of the phase-locked photocurrent components, plus
/// optional higher joint central moments `<dI_cos^a dI_sin^b>`.
///
/// Moments are in shot-noise units. When `gaussian` is set, any joint moment
/// not in the table is filled by Isserlis' theorem.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComponentStats {
    s_cos: f64,
    s_sin: f64,
    c: f64,
    gaussian: bool,
    #[serde(with = "joint_table", default)]
    joint: BTreeMap<(u32, u32), f64>,
}

impl ComponentStats {
    /// Gaussian components: every joint moment follows from `(s_cos, s_sin, c)`.
    pub fn gaussian(s_cos: f64, s_sin: f64, c: f64) -> Result<Self> {
        validate_second_order(s_cos, s_sin, c)?;
        Ok(Self {
            s_cos,
            s_sin,
            c,
            gaussian: true,
            joint: BTreeMap::new(),
        })
    }

    /// Gaussian components described by their 2x2 covariance matrix.
    pub fn from_covariance(var_cos: f64, var_sin: f64, cov: f64, gaussian: bool) -> Result<Self> {
        let (s_cos, s_sin, c) = second_order_from_covariance(var_cos, var_sin, cov)?;
        validate_second_order(s_cos, s_sin, c)?;
        Ok(Self {
            s_cos,
            s_sin,
            c,
            gaussian,
            joint: BTreeMap::new(),
        })
    }

    /// Non-Gaussian components with an explicit table of joint moments keyed by
    /// the raw powers `(a, b)`.
    pub fn with_moments(
        s_cos: f64,
        s_sin: f64,
        c: f64,
        table: impl IntoIterator<Item = ((u32, u32), f64)>,
    ) -> Result<Self> {
        validate_second_order(s_cos, s_sin, c)?;
        let joint: BTreeMap<_, _> = table.into_iter().collect();
        let stats = Self {
            s_cos,
            s_sin,
            c,
            gaussian: false,
            joint,
        };
        stats.check_table()?;
        Ok(stats)
    }

    pub fn s_cos(&self) -> f64 {
        self.s_cos
    }

    pub fn s_sin(&self) -> f64 {
        self.s_sin
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn is_gaussian(&self) -> bool {
        self.gaussian
    }

    pub fn declared_moments(&self) -> &BTreeMap<(u32, u32), f64> {
        &self.joint
    }

    /// Standard deviation of the phase-mixed photocurrent, `sqrt((s_cos^2 + s_sin^2) / 2)`.
    pub fn mixed_std(&self) -> f64 {
        (0.5 * (self.s_cos * self.s_cos + self.s_sin * self.s_sin)).sqrt()
    }

    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let cov = self.c * self.s_cos * self.s_sin;
        [[self.s_cos * self.s_cos, cov], [cov, self.s_sin * self.s_sin]]
    }

    /// `<dI_cos^a dI_sin^b>`.
    pub fn joint_moment(&self, a: u32, b: u32) -> Result<f64> {
        if let Some(&v) = self.joint.get(&(a, b)) {
            return Ok(v);
        }
        if self.gaussian {
            return Ok(isserlis_moment(a, b, self.s_cos, self.s_sin, self.c));
        }
        match (a, b) {
            (0, 0) => Ok(1.0),
            (1, 0) | (0, 1) => Ok(0.0),
            (2, 0) => Ok(self.s_cos * self.s_cos),
            (0, 2) => Ok(self.s_sin * self.s_sin),
            (1, 1) => Ok(self.c * self.s_cos * self.s_sin),
            _ => Err(Error::MissingMoment { a, b }),
        }
    }

    fn check_table(&self) -> Result<()> {
        let close = |x: f64, y: f64| (x - y).abs() <= CONSISTENCY_RTOL * x.abs().max(y.abs()).max(1e-300);
        for (&(a, b), &v) in &self.joint {
            if a + b > MAX_JOINT_ORDER {
                return Err(Error::OrderTooHigh {
                    order: a + b,
                    max: MAX_JOINT_ORDER,
                });
            }
            if !v.is_finite() {
                return Err(Error::invalid(format!("joint moment ({a},{b}) is not finite")));
            }
            if a % 2 == 0 && b % 2 == 0 && v < 0.0 {
                return Err(Error::invalid(format!("even joint moment ({a},{b}) is negative")));
            }
        }
        let expected = [
            ((2, 0), self.s_cos * self.s_cos),
            ((0, 2), self.s_sin * self.s_sin),
            ((1, 1), self.c * self.s_cos * self.s_sin),
        ];
        for (key, want) in expected {
            if let Some(&got) = self.joint.get(&key) {
                if !close(got, want) {
                    return Err(Error::invalid(format!(
                        "joint moment {key:?} = {got} disagrees with second-order value {want}"
                    )));
                }
            }
        }
        // <x^{2m}> >= <x^m>^2 for even m, on both pure axes.
        for m in (2..=MAX_JOINT_ORDER / 2).step_by(2) {
            for (hi, lo) in [((2 * m, 0), (m, 0)), ((0, 2 * m), (0, m))] {
                let (Ok(h), Ok(l)) = (self.joint_moment(hi.0, hi.1), self.joint_moment(lo.0, lo.1)) else {
                    continue;
                };
                if h < l * l * (1.0 - CONSISTENCY_RTOL) {
                    return Err(Error::invalid(format!(
                        "moment {hi:?} = {h} violates Cauchy-Schwarz against {lo:?} = {l}"
                    )));
                }
            }
        }
        Ok(())
    }
}

fn validate_second_order(s_cos: f64, s_sin: f64, c: f64) -> Result<()> {
    if !(s_cos.is_finite() && s_sin.is_finite() && c.is_finite()) {
        return Err(Error::invalid("component statistics must be finite"));
    }
    if s_cos < 0.0 || s_sin < 0.0 {
        return Err(Error::invalid(format!(
            "standard deviations must be nonnegative, got s_cos={s_cos}, s_sin={s_sin}"
        )));
    }
    if !(-1.0..=1.0).contains(&c) {
        return Err(Error::invalid(format!("correlation must lie in [-1, 1], got {c}")));
    }
    Ok(())
}

pub(crate) fn second_order_from_covariance(var_cos: f64, var_sin: f64, cov: f64) -> Result<(f64, f64, f64)> {
    const NEG_TOL: f64 = 1e-12;
    if var_cos < -NEG_TOL || var_sin < -NEG_TOL {
        return Err(Error::invalid(format!(
            "component variances must be nonnegative, got {var_cos}, {var_sin}"
        )));
    }
    let s_cos = var_cos.max(0.0).sqrt();
    let s_sin = var_sin.max(0.0).sqrt();
    let denom = s_cos * s_sin;
    let c = if denom > 0.0 { (cov / denom).clamp(-1.0, 1.0) } else { 0.0 };
    Ok((s_cos, s_sin, c))
}

/// `E[X^a Y^b]` for a zero-mean bivariate normal with standard deviations
/// `(sx, sy)` and correlation `rho`, by counting pairings.
pub fn isserlis_moment(a: u32, b: u32, sx: f64, sy: f64, rho: f64) -> f64 {
    if (a + b) % 2 == 1 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut k = a % 2;
    while k <= a.min(b) {
        let pairings: BigInt = binomial(a, k)
            * binomial(b, k)
            * factorial(k)
            * double_factorial(a as i64 - k as i64 - 1)
            * double_factorial(b as i64 - k as i64 - 1);
        total += pairings.to_f64().unwrap_or(f64::INFINITY) * rho.powi(k as i32);
        k += 2;
    }
    total * sx.powi(a as i32) * sy.powi(b as i32)
}

mod joint_table {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        a: u32,
        b: u32,
        value: f64,
    }

    pub fn serialize<S: Serializer>(map: &BTreeMap<(u32, u32), f64>, s: S) -> Result<S::Ok, S::Error> {
        let entries: Vec<Entry> = map
            .iter()
            .map(|(&(a, b), &value)| Entry { a, b, value })
            .collect();
        entries.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(u32, u32), f64>, D::Error> {
        let entries = Vec::<Entry>::deserialize(d)?;
        Ok(entries.into_iter().map(|e| ((e.a, e.b), e.value)).collect())
    }
}
