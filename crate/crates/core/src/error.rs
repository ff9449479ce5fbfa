use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("non-finite value encountered in {0}")]
    NonFinite(String),
    #[error("partial likelihood undefined: {0}")]
    UndefinedLikelihood(String),
    #[error("metric undefined: {0}")]
    UndefinedMetric(String),
    #[error("test statistic undefined: {0}")]
    UndefinedTest(String),
    #[error("lookup failed: {0}")]
    Lookup(String),
    #[error("alignment error: {0}")]
    Alignment(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("load error: {0}")]
    Load(String),
    #[error("ingestion error for record `{record}`: {reason}")]
    Ingestion { record: String, reason: String },
    #[error("no convergence after {iterations} iterations (last gradient norm {grad_norm:e})")]
    Convergence { iterations: usize, grad_norm: f64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}
