//! Error type shared across the crate.

/// Errors reported by offline and online routines.
///
/// Variants that correspond to method-level failure modes (saturation loss,
/// duplicate greedy selection, SCM stagnation) carry enough context to be
/// reported verbatim by a driver; they are not programming errors.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("singular truth system at mu = {mu:?}: {detail}")]
    SingularSystem { mu: Vec<f64>, detail: String },

    #[error("singular reduced system of size {n} at mu = {mu:?}")]
    SingularReduced { mu: Vec<f64>, n: usize },

    #[error("all points excluded from the partition (max denominator {max_g:.3e}); the ratio constant is undefined here")]
    EmptyPartition { max_g: f64 },

    #[error("saturation constant {theta:.6} >= 1; the certified bound is invalid for this space pair")]
    SaturationInvalid { theta: f64 },

    #[error(
        "saturation constant {theta:.6} still >= 1 after enrichment order {k} (limit {k_max}) at mu = {mu:?}"
    )]
    SaturationFailure { theta: f64, k: u32, k_max: u32, mu: Vec<f64> },

    #[error("parameter {mu:?} selected twice at step {n}: {hint}")]
    DuplicateSelection { mu: Vec<f64>, n: usize, hint: String },

    #[error("stability lower bound did not converge: gap {gap:.3e} after {k} constraints")]
    ScmNonConvergence { gap: f64, k: usize },

    #[error("nonpositive stability lower bound {0:.3e}")]
    NonpositiveBeta(f64),

    #[error("basis extension dropped every new snapshot")]
    AllSnapshotsDropped,

    #[error("enrichment at order {k} contributed no new directions")]
    EnrichmentExhausted { k: u32 },

    #[error("a complex scalar type is required: {0}")]
    ComplexRequired(&'static str),

    #[error("eigenvalue computation failed: {0}")]
    EigenFailure(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("container format: {0}")]
    Container(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
