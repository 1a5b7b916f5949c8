use thiserror::Error;

/// Errors produced anywhere in the simulation and validation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration at `{path}`: {msg}")]
    Config { path: String, msg: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("{kind} nucleation has a history-dependent intensity; no analytic value exists (estimate it by simulation)")]
    UnsupportedAnalytic { kind: &'static str },

    #[error("ensemble contains no usable realizations")]
    EmptyEnsemble,

    #[error("minkowski radius {r} is below 2h = {min} (h = {h}); the r-neighbourhood is not resolved by the grid, use r >= {min}")]
    RadiusTooSmall { r: f64, h: f64, min: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("config parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(path: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config { path: path.into(), msg: msg.into() }
    }

    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
