//! Error type shared by every module of the crate.

use thiserror::Error;

/// Failures reported by the analysis, kernel, energy and simulation routines.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("not strictly hyperbolic: {0}")]
    NotStrictlyHyperbolic(String),
    #[error("characteristic speed at the boundary or shock: {0}")]
    Characteristic(String),
    #[error("no exponential dichotomy at lambda = {re} + {im}i (margin {margin:e})")]
    NoDichotomy { re: f64, im: f64, margin: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("boundary map is not onto: {0}")]
    InvalidBoundaryMap(String),
    #[error("function vanishes on the contour near lambda = {re} + {im}i")]
    ZeroOnContour { re: f64, im: f64 },
    #[error("contour refinement budget exceeded after {0} evaluations")]
    RefinementBudgetExceeded(usize),
    #[error("essential spectrum intrudes: abscissa {abscissa} is not below -{alpha}")]
    EssentialSpectrumIntrusion { alpha: f64, abscissa: f64 },
    #[error("singular boundary matrix: {0}")]
    SingularBoundaryMatrix(String),
    #[error("high-frequency expansion failed: {0}")]
    ExpansionFailure(String),
    #[error("quadrature did not converge: {0}")]
    QuadratureFailure(String),
    #[error("perturbed jump vanishes: {0}")]
    DegenerateJump(String),
    #[error("state outside the chart of the diagonalizer: {0}")]
    OutOfChart(String),
    #[error("trajectory sampled too coarsely: {0}")]
    InsufficientSampling(String),
    #[error("time step rejected: {0}")]
    StepRejected(String),
    #[error("amplitude {value:e} exceeded the bound {bound:e} at t = {t}")]
    AmplitudeEscape { t: f64, value: f64, bound: f64 },
    #[error("boundary trace solve failed: {0}")]
    BoundaryTraceFailure(String),
    #[error("ill-posed boundary: {0}")]
    IllPosedBoundary(String),
    #[error("shock trace solve failed: {0}")]
    ShockTraceFailure(String),
    #[error("shock disintegrated: {0}")]
    ShockDisintegration(String),
    #[error("decay fit unreliable: {0}")]
    FitUnreliable(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("degenerate elimination: {0}")]
    Degenerate(String),
    #[error("configuration error: {0}")]
    Config(String),
}

impl Error {
    /// Short machine-readable tag, used in error JSON and exit codes.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidModel(_) => "InvalidModel",
            Error::NotStrictlyHyperbolic(_) => "NotStrictlyHyperbolic",
            Error::Characteristic(_) => "Characteristic",
            Error::NoDichotomy { .. } => "NoDichotomy",
            Error::DimensionMismatch(_) => "DimensionMismatch",
            Error::InvalidBoundaryMap(_) => "InvalidBoundaryMap",
            Error::ZeroOnContour { .. } => "ZeroOnContour",
            Error::RefinementBudgetExceeded(_) => "RefinementBudgetExceeded",
            Error::EssentialSpectrumIntrusion { .. } => "EssentialSpectrumIntrusion",
            Error::SingularBoundaryMatrix(_) => "SingularBoundaryMatrix",
            Error::ExpansionFailure(_) => "ExpansionFailure",
            Error::QuadratureFailure(_) => "QuadratureFailure",
            Error::DegenerateJump(_) => "DegenerateJump",
            Error::OutOfChart(_) => "OutOfChart",
            Error::InsufficientSampling(_) => "InsufficientSampling",
            Error::StepRejected(_) => "StepRejected",
            Error::AmplitudeEscape { .. } => "AmplitudeEscape",
            Error::BoundaryTraceFailure(_) => "BoundaryTraceFailure",
            Error::IllPosedBoundary(_) => "IllPosedBoundary",
            Error::ShockTraceFailure(_) => "ShockTraceFailure",
            Error::ShockDisintegration(_) => "ShockDisintegration",
            Error::FitUnreliable(_) => "FitUnreliable",
            Error::Precondition(_) => "Precondition",
            Error::Degenerate(_) => "Degenerate",
            Error::Config(_) => "Config",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
