use std::fmt;

use nalgebra::{Matrix4, SMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Eigenvalue tolerance for the physicality verdict.
pub const PHYSICALITY_TOL: f64 = 1e-9;

/// Quadrature labels in storage order.
pub const QUADRATURE_LABELS: [&str; 4] = ["p_s", "q_s", "p_a", "q_a"];

/// Two-mode covariance matrix over `(p_s, q_s, p_a, q_a)` in shot-noise units
/// (vacuum variance 1, `[p, q] = 2i`).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 4]; 4]", into = "[[f64; 4]; 4]")]
pub struct TwoModeCovariance(Matrix4<f64>);

/// Which way [`basis_change`] maps.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BasisDirection {
    /// `(p_+, q_+, p_-, q_-)` to `(p_s, q_s, p_a, q_a)`.
    SidebandsToSymmetric,
    SymmetricToSidebands,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhysicalityReport {
    pub symmetry_defect: f64,
    pub min_eigenvalue: f64,
    /// Smallest eigenvalue of the Hermitian matrix `V + iJ`.
    pub min_uncertainty_eigenvalue: f64,
    pub physical: bool,
}

impl fmt::Display for PhysicalityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "symmetry defect {:.3e}, min eig(V) {:.6}, min eig(V + iJ) {:.6}",
            self.symmetry_defect, self.min_eigenvalue, self.min_uncertainty_eigenvalue
        )
    }
}

/// Block-diagonal symplectic form, one `[[0, 1], [-1, 0]]` block per mode.
pub fn symplectic_form() -> Matrix4<f64> {
    let mut j = Matrix4::zeros();
    j[(0, 1)] = 1.0;
    j[(1, 0)] = -1.0;
    j[(2, 3)] = 1.0;
    j[(3, 2)] = -1.0;
    j
}

/// Symmetry defect, smallest eigenvalues of `V` and `V + iJ`, and the verdict.
pub fn validate_covariance(v: &Matrix4<f64>) -> Result<PhysicalityReport> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("covariance matrix has non-finite entries"));
    }
    let symmetry_defect = (v - v.transpose()).abs().max();
    let sym = (v + v.transpose()) * 0.5;
    let min_eigenvalue = SymmetricEigen::new(sym).eigenvalues.min();

    // V + iJ is Hermitian; its real embedding [[V, -J], [J, V]] carries each
    // eigenvalue twice.
    let j = symplectic_form();
    let mut embed = SMatrix::<f64, 8, 8>::zeros();
    embed.fixed_view_mut::<4, 4>(0, 0).copy_from(&sym);
    embed.fixed_view_mut::<4, 4>(4, 4).copy_from(&sym);
    embed.fixed_view_mut::<4, 4>(0, 4).copy_from(&(-j));
    embed.fixed_view_mut::<4, 4>(4, 0).copy_from(&j);
    let min_uncertainty_eigenvalue = SymmetricEigen::new(embed).eigenvalues.min();

    let physical = symmetry_defect <= PHYSICALITY_TOL
        && min_eigenvalue >= -PHYSICALITY_TOL
        && min_uncertainty_eigenvalue >= -PHYSICALITY_TOL;
    Ok(PhysicalityReport {
        symmetry_defect,
        min_eigenvalue,
        min_uncertainty_eigenvalue,
        physical,
    })
}

impl TwoModeCovariance {
    pub fn new(v: Matrix4<f64>) -> Result<Self> {
        let report = validate_covariance(&v)?;
        if !report.physical {
            return Err(Error::Unphysical(Box::new(report)));
        }
        Ok(Self((v + v.transpose()) * 0.5))
    }

    pub fn from_rows(rows: [[f64; 4]; 4]) -> Result<Self> {
        Self::new(Matrix4::from_fn(|i, j| rows[i][j]))
    }

    pub fn vacuum() -> Self {
        Self(Matrix4::identity())
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.0
    }

    pub fn rows(&self) -> [[f64; 4]; 4] {
        std::array::from_fn(|i| std::array::from_fn(|j| self.0[(i, j)]))
    }

    pub fn report(&self) -> PhysicalityReport {
        validate_covariance(&self.0).expect("stored covariance is finite")
    }
}

impl TryFrom<[[f64; 4]; 4]> for TwoModeCovariance {
    type Error = Error;

    fn try_from(rows: [[f64; 4]; 4]) -> Result<Self> {
        Self::from_rows(rows)
    }
}

impl From<TwoModeCovariance> for [[f64; 4]; 4] {
    fn from(v: TwoModeCovariance) -> Self {
        v.rows()
    }
}

/// Orthogonal map between sideband and symmetric/antisymmetric quadratures.
/// It is its own inverse.
fn sideband_transform() -> Matrix4<f64> {
    let h = std::f64::consts::FRAC_1_SQRT_2;
    Matrix4::new(
        h, 0.0, h, 0.0, //
        0.0, h, 0.0, h, //
        h, 0.0, -h, 0.0, //
        0.0, h, 0.0, -h,
    )
}

/// Change of modal basis between the `±Ω` sidebands and the `S`/`A` modes,
/// `a_s = (a_+ + a_-)/√2`, `a_a = (a_+ - a_-)/√2`.
pub fn basis_change(direction: BasisDirection, v: &TwoModeCovariance) -> Result<TwoModeCovariance> {
    let o = match direction {
        BasisDirection::SidebandsToSymmetric => sideband_transform(),
        BasisDirection::SymmetricToSidebands => sideband_transform().transpose(),
    };
    TwoModeCovariance::new(o * v.matrix() * o.transpose())
}

/// The stationary (symmetric) covariance form parameterized by `(α, β, γ, δ)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetricCovariance {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub delta: f64,
}

impl SymmetricCovariance {
    pub fn new(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            delta,
        }
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.alpha, self.beta, self.gamma, self.delta]
    }

    pub fn matrix(&self) -> Matrix4<f64> {
        symmetric_matrix(self.as_array())
    }

    pub fn expand(&self) -> Result<TwoModeCovariance> {
        symmetric_covariance(self.alpha, self.beta, self.gamma, self.delta)
    }
}

pub(crate) fn symmetric_matrix([alpha, beta, gamma, delta]: [f64; 4]) -> Matrix4<f64> {
    Matrix4::new(
        alpha, gamma, delta, 0.0, //
        gamma, beta, 0.0, delta, //
        delta, 0.0, beta, -gamma, //
        0.0, delta, -gamma, alpha,
    )
}

/// Unit basis matrices of the symmetric form, in `(α, β, γ, δ)` order.
pub(crate) fn symmetric_basis() -> [Matrix4<f64>; 4] {
    std::array::from_fn(|i| {
        let mut p = [0.0; 4];
        p[i] = 1.0;
        symmetric_matrix(p)
    })
}

/// Rows `(α, γ, δ, 0)`, `(γ, β, 0, δ)`, `(δ, 0, β, -γ)`, `(0, δ, -γ, α)`.
pub fn symmetric_covariance(alpha: f64, beta: f64, gamma: f64, delta: f64) -> Result<TwoModeCovariance> {
    TwoModeCovariance::new(symmetric_matrix([alpha, beta, gamma, delta]))
}
