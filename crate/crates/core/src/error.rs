use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),

    #[error("network error: {0}")]
    Network(String),

    #[error("no route from edge {origin} to edge {destination}")]
    Unreachable { origin: usize, destination: usize },

    #[error("communication error: {0}")]
    Comms(#[from] CommsError),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("could not parse configuration: {0}")]
    Parse(String),

    #[error("`{key}` = {value} is outside its domain ({domain})")]
    OutOfDomain {
        key: &'static str,
        value: String,
        domain: &'static str,
    },

    #[error("`{key}`: {message}")]
    Invalid { key: &'static str, message: String },
}

impl ConfigError {
    pub(crate) fn domain(key: &'static str, value: impl ToString, domain: &'static str) -> Self {
        ConfigError::OutOfDomain {
            key,
            value: value.to_string(),
            domain,
        }
    }
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
pub enum CommsError {
    #[error("already-connected")]
    AlreadyConnected,
    #[error("not-connected")]
    NotConnected,
    #[error("out-of-range")]
    OutOfRange,
    #[error("unknown connection")]
    UnknownConnection,
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
