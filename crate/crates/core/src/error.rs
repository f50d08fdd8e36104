use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("unsupported measure: {0}")]
    UnsupportedMeasure(String),

    #[error("state blew up at t = {time}: {detail}")]
    BlowUp { time: f64, detail: String },

    #[error("non-finite value in term `{term}` at t = {time}")]
    NonFinite { term: String, time: f64 },

    #[error("support violation: {0}")]
    SupportViolation(String),

    #[error("refusing to evaluate `{term}`: {reason}")]
    Refused { term: String, reason: String },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config parse error: {0}")]
    Parse(String),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
