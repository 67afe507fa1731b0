use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("parse error at row {row}{}: {msg}", .col.map(|c| format!(", column {c}")).unwrap_or_default())]
    Parse { row: usize, col: Option<usize>, msg: String },

    #[error(transparent)]
    Core(#[from] fdchange::Error),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("{0}")]
    Usage(String),
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}
