use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombineSign {
    Plus,
    Minus,
}

/// `(a ± b) / √2` for simultaneously acquired, index-aligned streams.
pub fn combine_two_beams(a: &[f64], b: &[f64], sign: CombineSign) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    let s = match sign {
        CombineSign::Plus => 1.0,
        CombineSign::Minus => -1.0,
    };
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x + s * y) * std::f64::consts::FRAC_1_SQRT_2)
        .collect())
}
