use thiserror::Error;

/// Problems with a configuration file. The CLI maps these to exit code 2.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {0}: {1}")]
    Io(String, #[source] std::io::Error),
    #[error("invalid configuration: {0}")]
    Parse(#[source] serde_json::Error),
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Problems with input data files.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {message}")]
    Format { path: String, message: String },
    #[error("{0}")]
    Empty(String),
}
