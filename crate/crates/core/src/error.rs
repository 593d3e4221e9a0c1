use thiserror::Error;

/// Errors raised by the response and optimization routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid perturbation: {0}")]
    InvalidPerturbation(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("dimension {0} is too small (need at least 2)")]
    DimensionTooSmall(usize),

    #[error("transition matrix is not mixing (reducible or periodic)")]
    NonMixing,

    #[error("{what} did not converge within {iterations} iterations (residual {residual:e})")]
    NoConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("response system is singular or inconsistent (residual {residual:e})")]
    SingularSystem { residual: f64 },

    #[error("dense operation on n = {n} exceeds the cap of {cap}")]
    TooLarge { n: usize, cap: usize },

    #[error("epsilon {epsilon} lies outside the feasible interval [{lower}, {upper}]")]
    InfeasibleEpsilon { epsilon: f64, lower: f64, upper: f64 },

    #[error("matrix has non-positive entries; the positive-matrix algorithm does not apply")]
    NotPositive,

    #[error("no admissible perturbation exists for this support")]
    EmptyFeasibleSet,

    #[error("sign probe is inconclusive: both signs change the norm by less than {0:e}")]
    Inconclusive(f64),

    #[error("observable is constant; every admissible perturbation has zero response")]
    ConstantObservable,

    #[error("column-centred gradient vanishes; no unit-norm maximiser exists")]
    ZeroGradient,

    #[error("|lambda_2| = {modulus} is not separated from the next eigenvalue modulus")]
    SpectralGapAmbiguous { modulus: f64 },

    #[error("second eigenvalue is zero")]
    ZeroLambda2,

    #[error("second eigenvalue appears defective (|l* r| = {0:e})")]
    DefectiveEigenvalue(f64),

    #[error("Ulam quadrature column sum deviates from 1 by {deviation:e} in column {column}")]
    QuadratureFailure { column: usize, deviation: f64 },

    #[error("point {0} lies outside the map domain")]
    OutOfDomain(f64),

    #[error("linear algebra backend failure: {0}")]
    Backend(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Errors caused by bad input, as opposed to a numerical method failing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::InvalidMatrix(_)
                | Error::InvalidPerturbation(_)
                | Error::DimensionMismatch { .. }
                | Error::DimensionTooSmall(_)
                | Error::NonMixing
                | Error::TooLarge { .. }
                | Error::InfeasibleEpsilon { .. }
                | Error::NotPositive
                | Error::EmptyFeasibleSet
                | Error::ConstantObservable
                | Error::OutOfDomain(_)
                | Error::Parse(_)
                | Error::Io(_)
        )
    }

    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidMatrix(_) => "InvalidMatrix",
            Error::InvalidPerturbation(_) => "InvalidPerturbation",
            Error::DimensionMismatch { .. } => "DimensionMismatch",
            Error::DimensionTooSmall(_) => "DimensionTooSmall",
            Error::NonMixing => "NonMixing",
            Error::NoConvergence { .. } => "NoConvergence",
            Error::SingularSystem { .. } => "SingularSystem",
            Error::TooLarge { .. } => "TooLarge",
            Error::InfeasibleEpsilon { .. } => "InfeasibleEpsilon",
            Error::NotPositive => "NotPositive",
            Error::EmptyFeasibleSet => "EmptyFeasibleSet",
            Error::Inconclusive(_) => "Inconclusive",
            Error::ConstantObservable => "ConstantObservable",
            Error::ZeroGradient => "ZeroGradient",
            Error::SpectralGapAmbiguous { .. } => "SpectralGapAmbiguous",
            Error::ZeroLambda2 => "ZeroLambda2",
            Error::DefectiveEigenvalue(_) => "DefectiveEigenvalue",
            Error::QuadratureFailure { .. } => "QuadratureFailure",
            Error::OutOfDomain(_) => "OutOfDomain",
            Error::Backend(_) => "Backend",
            Error::Parse(_) => "Parse",
            Error::Io(_) => "Io",
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
