use std::path::PathBuf;

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] fracheat::Error),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error at {}: {message}", path.display())]
    Io { path: PathBuf, message: String },
    #[error("output error: {0}")]
    Output(String),
}

impl CliError {
    /// 2 for invalid input, 3 for numerical or output failures, 4 when the
    /// model falls outside the theory.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } | CliError::Output(_) => 3,
            CliError::Core(e) => match e {
                fracheat::Error::Assumption(_) => 4,
                fracheat::Error::Numerical(_) | fracheat::Error::Analysis(_) | fracheat::Error::Model(_) => 3,
                _ => 2,
            },
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Core(e) => e.kind(),
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Output(_) => "output",
        }
    }

    /// Structured form written to standard error.
    pub fn to_json(&self) -> String {
        json!({
            "error": {
                "kind": self.kind(),
                "message": self.to_string(),
                "exit_code": self.exit_code(),
            }
        })
        .to_string()
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Output(e.to_string())
    }
}
