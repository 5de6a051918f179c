use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("config line {line}: expected key=value, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("invalid value for `{key}`: {reason}")]
    Value { key: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("output directory {0} exists and does not hold a previous bundle")]
    OccupiedOutput(PathBuf),
    #[error(transparent)]
    Core(#[from] arc_core::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}
