use thiserror::Error;

use crate::hilbert::SpaceTag;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is {rows}x{cols} but space {space:?} has dimension {expected}")]
    DimensionMismatch {
        space: SpaceTag,
        rows: usize,
        cols: usize,
        expected: usize,
    },

    #[error("space mismatch: expected {expected:?}, found {found:?}")]
    SpaceMismatch { expected: SpaceTag, found: SpaceTag },

    #[error("operator is not Hermitian (max |A - A^dagger| = {defect:e}, tolerance {tolerance:e})")]
    NotHermitian { defect: f64, tolerance: f64 },

    #[error("density matrix trace is {trace}, expected 1")]
    NotNormalized { trace: f64 },

    #[error("density matrix has eigenvalue {min_eigenvalue:e} below the positivity tolerance")]
    NotPositive { min_eigenvalue: f64 },

    #[error("beta * spectral width = {exponent:e} overflows exp(); rescale the environment energies")]
    GibbsOverflow { exponent: f64 },

    #[error("target energy {target} lies outside the open spectral interval ({min}, {max}); no finite beta exists")]
    BetaInfeasible { target: f64, min: f64, max: f64 },

    #[error("environment Hamiltonian has a degenerate spectrum; beta is undetermined")]
    DegenerateSpectrum,

    #[error("invalid channel set: {0}")]
    InvalidChannels(String),

    #[error("time grid does not cover [0, {t}]: {reason}")]
    GridCoverage { t: f64, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid simplex point: {0}")]
    InvalidSimplexPoint(String),

    #[error("walk already finished: {active} active channel(s)")]
    WalkFinished { active: usize },

    #[error("probability {value:e} for channel {channel} is outside [0, 1] beyond tolerance")]
    ProbabilityOutOfRange { channel: usize, value: f64 },
}

impl Error {
    /// Stable name of the violated condition, for machine-readable reports.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::SpaceMismatch { .. } => "space_mismatch",
            Error::NotHermitian { .. } => "not_hermitian",
            Error::NotNormalized { .. } => "not_normalized",
            Error::NotPositive { .. } => "not_positive",
            Error::GibbsOverflow { .. } => "gibbs_overflow",
            Error::BetaInfeasible { .. } => "beta_infeasible",
            Error::DegenerateSpectrum => "degenerate_spectrum",
            Error::InvalidChannels(_) => "invalid_channels",
            Error::GridCoverage { .. } => "grid_coverage",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::InvalidSimplexPoint(_) => "invalid_simplex_point",
            Error::WalkFinished { .. } => "walk_finished",
            Error::ProbabilityOutOfRange { .. } => "probability_out_of_range",
        }
    }
}
