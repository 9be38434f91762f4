use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{context}: {source}")]
    Numeric {
        context: String,
        #[source]
        source: nsvb_core::Error,
    },

    /// A run stopped part-way; partial artifacts were written.
    #[error("{0}")]
    Aborted(String),
}

impl CliError {
    /// 1 for usage, configuration and file problems; 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Io { .. } => 1,
            CliError::Numeric { .. } | CliError::Aborted(_) => 2,
        }
    }

    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    pub fn numeric(context: impl Into<String>, source: nsvb_core::Error) -> Self {
        CliError::Numeric { context: context.into(), source }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Usage(format!("CSV: {e}"))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Usage(format!("JSON: {e}"))
    }
}
