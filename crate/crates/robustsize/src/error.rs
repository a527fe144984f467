use thiserror::Error;

/// Errors raised by the library. Exceptional points of a statistic are not
/// errors; they are reported through [`crate::statistics::TestOutcome`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("rank deficient: {0}")]
    RankDeficient(String),
    #[error("non-finite input: {0}")]
    NonFinite(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("singular parameter: |rho| = 1 makes the AR(1) matrix singular")]
    SingularParameter,
    #[error("degenerate probe: trace normalization vanished at rho = {rho}")]
    DegenerateProbe { rho: f64 },
    #[error("y lies in the exceptional set {0}")]
    Exceptional(&'static str),
    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("no adjustment needed: e+ and e- lie in span(X) with zero restricted coefficients")]
    NoAdjustmentNeeded,
    #[error("no adjustment scenario applies: {0}")]
    NoScenario(String),
    #[error("adjustment impossible: {0}")]
    AdjustmentImpossible(String),
    #[error("adjusted test has size one: {0}")]
    AdjustedSizeOne(String),
    #[error("inapplicable: {0}")]
    Inapplicable(String),
    #[error("calibration refused: {0}")]
    AuditRefusal(String),
    #[error("calibration did not converge; bracket [{lo}, {hi}]")]
    NonConvergence { lo: f64, hi: f64 },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("usage error: {0}")]
    Usage(String),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Dimension(_) => "dimension",
            Error::RankDeficient(_) => "rank-deficient",
            Error::NonFinite(_) => "non-finite",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::SingularParameter => "singular-parameter",
            Error::DegenerateProbe { .. } => "degenerate-probe",
            Error::Exceptional(_) => "exceptional",
            Error::NotPositiveDefinite(_) => "not-positive-definite",
            Error::NoAdjustmentNeeded => "no-adjustment-needed",
            Error::NoScenario(_) => "no-scenario",
            Error::AdjustmentImpossible(_) => "adjustment-impossible",
            Error::AdjustedSizeOne(_) => "adjusted-size-one",
            Error::Inapplicable(_) => "inapplicable",
            Error::AuditRefusal(_) => "audit-refusal",
            Error::NonConvergence { .. } => "non-convergence",
            Error::Io(_) => "io",
            Error::Usage(_) => "usage",
            Error::Parse(_) => "parse",
        }
    }
}
