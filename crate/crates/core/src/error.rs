use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("average gain must be positive, got {0}")]
    NonPositiveMean(f64),
    #[error("power split alpha = 0 leaves s11 with no power")]
    ZeroAlpha,
    #[error("probability {value} outside [0, 1] in {context}")]
    OutOfRange { value: f64, context: &'static str },
    #[error("quadrature did not converge: estimate {estimate}, error bound {error}")]
    NonConvergence { estimate: f64, error: f64 },
    #[error("invalid config field `{field}`: {reason}")]
    Config { field: &'static str, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
