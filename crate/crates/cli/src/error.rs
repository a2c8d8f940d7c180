use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("cannot read `{path}`: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },

    #[error("cannot write output: {0}")]
    Write(String),

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("invalid scenario key `{key}`: {detail}")]
    Schema { key: String, detail: String },

    #[error("numerical error: {0}")]
    Numerical(#[from] ltqkd_core::Error),
}

impl CliError {
    pub fn schema(key: impl Into<String>, detail: impl Into<String>) -> Self {
        Self::Schema {
            key: key.into(),
            detail: detail.into(),
        }
    }

    /// 1 for usage, schema and I/O problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Numerical(_) => 2,
            _ => 1,
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        Self::Write(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        Self::Write(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
