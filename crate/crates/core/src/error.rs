use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty dimension: {0}")]
    EmptyDimension(&'static str),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("no quantile coefficients for level {0}")]
    MissingCoefficient(f64),
    #[error("optimization failed: {0}")]
    Optimization(String),
    #[error("degenerate sample: {0}")]
    Degenerate(String),
    #[error("degenerate variance: {0}")]
    DegenerateVariance(String),
    #[error("join error: {0}")]
    Join(String),
    #[error("fold for target year {year} failed: {reason}")]
    FoldFailure { year: i32, reason: String },
    #[error("coverage gap: {0}")]
    CoverageGap(String),
    #[error("no outcome for target year {0}")]
    MissingOutcome(i32),
    #[error("negative horizon: {0}")]
    NegativeHorizon(String),
    #[error("replication {index}: {source}")]
    Replication { index: usize, source: Box<Error> },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyDimension(_) => "empty_dimension",
            Error::Dimension(_) => "dimension",
            Error::Domain(_) => "domain",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::MissingCoefficient(_) => "missing_coefficient",
            Error::Optimization(_) => "optimization",
            Error::Degenerate(_) => "degenerate",
            Error::DegenerateVariance(_) => "degenerate_variance",
            Error::Join(_) => "join",
            Error::FoldFailure { .. } => "fold_failure",
            Error::CoverageGap(_) => "coverage_gap",
            Error::MissingOutcome(_) => "missing_outcome",
            Error::NegativeHorizon(_) => "negative_horizon",
            Error::Replication { .. } => "replication",
            Error::Parse(_) => "parse",
            Error::Io(_) => "io",
        }
    }

    /// True for failures of the numerical machinery rather than of the input data.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Optimization(_) | Error::Degenerate(_) | Error::DegenerateVariance(_) => true,
            Error::FoldFailure { reason, .. } => reason.starts_with("numerical:"),
            Error::Replication { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Parse(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
