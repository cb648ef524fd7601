use thiserror::Error;

use crate::state::PhysicalityReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("order {order} exceeds the supported maximum {max}")]
    OrderTooHigh { order: u32, max: u32 },

    #[error("joint moment <I_cos^{a} I_sin^{b}> is not available for non-Gaussian statistics")]
    MissingMoment { a: u32, b: u32 },

    #[error("correlated components (c = {c}) are outside the supported domain for {what}")]
    CorrelatedUnsupported { c: f64, what: &'static str },

    #[error("covariance matrix is not physical: {0}")]
    Unphysical(Box<PhysicalityReport>),

    #[error("masquerade target is infeasible: required fourth-order deficit {required} exceeds reachable {reachable}")]
    Infeasible { required: f64, reachable: f64 },

    #[error("degenerate request: {0}")]
    Degenerate(String),

    #[error("insufficient samples: need at least {required}, got {available}")]
    InsufficientSamples { required: usize, available: usize },

    #[error("zero variance in sample")]
    ZeroVariance,

    #[error("aliasing: sample rate {sample_rate} Hz must exceed twice the analysis frequency {analysis_frequency} Hz")]
    Aliasing { sample_rate: f64, analysis_frequency: f64 },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("rank-deficient scan: unresolved parameter directions {unresolved:?}")]
    RankDeficient { unresolved: Vec<[f64; 4]> },

    #[error("fit did not converge after {iterations} iterations")]
    NotConverged { iterations: usize },

    #[error("dataset format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("truncated dataset: header declares {expected} records, found {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("record count disagreement: header per-setting counts sum to {header}, record block declares {records}")]
    CountMismatch { header: u64, records: u64 },

    #[error("malformed dataset: {0}")]
    Malformed(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("pipeline stage `{stage}` failed")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for errors caused by inputs or configuration rather than by a
    /// failure while running.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Stage { .. }
            | Error::Io(_)
            | Error::NotConverged { .. }
            | Error::Json(_) => false,
            _ => true,
        }
    }
}
