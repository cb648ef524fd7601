//! Two-mode field states, modal bases, and measurement models.

mod covariance;
mod measurement;
mod model;

pub use covariance::{
    basis_change, symmetric_covariance, symplectic_form, validate_covariance, BasisDirection, PhysicalityReport,
    SymmetricCovariance, TwoModeCovariance, PHYSICALITY_TOL, QUADRATURE_LABELS,
};
pub(crate) use covariance::symmetric_basis;
pub use measurement::{
    homodyne_gain, predicted_component_stats, CoefficientFn, ComponentResponse, LossyCavity, MeasurementDescription,
    MeasurementModel, ResonatorResponse,
};
pub use model::{ComponentLaw, EngineeredLaw, StateModel};
