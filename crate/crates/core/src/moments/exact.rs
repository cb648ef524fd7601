//! Exact rational coefficients for the moment identities.

use num::{BigInt, BigRational, One, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Largest `a + b` accepted by [`phase_average_weight`]. This covers
/// photocurrent moments up to order 32.
pub const MAX_PHASE_ORDER: u32 = 16;

pub(crate) fn factorial(n: u32) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * k)
}

/// `n!!`, with the convention `(-1)!! = 0!! = 1`.
pub(crate) fn double_factorial(n: i64) -> BigInt {
    let mut acc = BigInt::one();
    let mut k = n;
    while k > 1 {
        acc *= k;
        k -= 2;
    }
    acc
}

/// `(2n - 1)!!`, the Gaussian central moment of order `2n` for unit variance.
pub fn odd_double_factorial(n: u32) -> BigInt {
    double_factorial(2 * n as i64 - 1)
}

pub(crate) fn binomial(n: u32, k: u32) -> BigInt {
    if k > n {
        return BigInt::zero();
    }
    factorial(n) / (factorial(k) * factorial(n - k))
}

pub fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Average of `cos^{2a}θ sin^{2b}θ` over one period:
/// `(2a)! (2b)! / (4^{a+b} a! b! (a+b)!)`.
pub fn phase_average_weight(a: u32, b: u32) -> Result<BigRational> {
    if a + b > MAX_PHASE_ORDER {
        return Err(Error::OrderTooHigh {
            order: 2 * (a + b),
            max: 2 * MAX_PHASE_ORDER,
        });
    }
    let num = factorial(2 * a) * factorial(2 * b);
    let den = BigInt::from(4u32).pow(a + b) * factorial(a) * factorial(b) * factorial(a + b);
    Ok(BigRational::new(num, den))
}

/// Weight multiplying `<I_cos^{2a} I_sin^{2b}>` in the phase-averaged moment
/// of order `2(a+b)`: `binom(2(a+b), 2a) * phase_average_weight(a, b)`.
pub fn mixed_expansion_weight(a: u32, b: u32) -> Result<BigRational> {
    let w = phase_average_weight(a, b)?;
    Ok(w * BigRational::from_integer(binomial(2 * (a + b), 2 * a)))
}

/// `d_{n,k} = [n! - (2(n-k)-1)!! (2k-1)!!] / ((n-k)! k!)`.
pub fn dnk_coefficient(n: u32, k: u32) -> Result<BigRational> {
    if k > n {
        return Err(Error::invalid(format!("d_{{n,k}} needs 0 <= k <= n, got n={n}, k={k}")));
    }
    let num = factorial(n) - odd_double_factorial(n - k) * odd_double_factorial(k);
    let den = factorial(n - k) * factorial(k);
    Ok(BigRational::new(num, den))
}

/// `(2n-1)!! / 2^n`, the prefactor that turns the `d_{n,k}` sum into the
/// order-`2n` constraint.
pub fn constraint_prefactor(n: u32) -> BigRational {
    BigRational::new(odd_double_factorial(n), BigInt::from(2u32).pow(n))
}
