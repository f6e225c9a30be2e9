use thiserror::Error;

pub type Result<T> = std::result::Result<T, MarketError>;

#[derive(Debug, Error)]
pub enum MarketError {
    #[error("singular system: {0}")]
    SingularSystem(String),

    #[error("solver did not converge after {iterations} iterations (last residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("shape mismatch: expected {expected}, found {found}")]
    ShapeMismatch { expected: String, found: String },

    #[error(
        "exact Shapley enumeration refused for {sellers} sellers (limit {limit}); use sampled mode"
    )]
    SizeRefused { sellers: usize, limit: usize },

    #[error("no score for subset `{0}`")]
    MissingScore(String),

    #[error("remote judge failed after {attempts} attempts: {message}")]
    Transport { attempts: usize, message: String },

    #[error("degenerate redistribution for seller {seller}: zero marginal contribution but payment {payment}")]
    DegenerateRedistribution { seller: usize, payment: f64 },

    #[error("{operation} is not defined for {domain} markets")]
    UnsupportedDomain {
        operation: &'static str,
        domain: String,
    },

    #[error("invalid input: {}", .0.join("; "))]
    Invalid(Vec<String>),

    #[error("at reported cost {point}: {source}")]
    AtGridPoint {
        point: f64,
        #[source]
        source: Box<MarketError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl MarketError {
    pub fn invalid(message: impl Into<String>) -> Self {
        MarketError::Invalid(vec![message.into()])
    }

    /// Short machine-readable name of the error variant.
    pub fn kind(&self) -> &'static str {
        match self {
            MarketError::SingularSystem(_) => "singular_system",
            MarketError::NotConverged { .. } => "not_converged",
            MarketError::ShapeMismatch { .. } => "shape_mismatch",
            MarketError::SizeRefused { .. } => "size_refused",
            MarketError::MissingScore(_) => "missing_score",
            MarketError::Transport { .. } => "transport",
            MarketError::DegenerateRedistribution { .. } => "degenerate_redistribution",
            MarketError::UnsupportedDomain { .. } => "unsupported_domain",
            MarketError::Invalid(_) => "validation",
            MarketError::AtGridPoint { source, .. } => source.kind(),
            MarketError::Io(_) => "io",
            MarketError::Json(_) => "json",
            MarketError::Csv(_) => "csv",
        }
    }
}
