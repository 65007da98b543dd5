use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Upstream(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Io(_) => 4,
            CliError::Upstream(_) => 5,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Validation(_) => "validation",
            CliError::Io(_) => "io",
            CliError::Upstream(_) => "upstream",
        }
    }

    /// Single JSON line written to stderr on failure.
    pub fn line(&self) -> String {
        json!({ "error": { "kind": self.kind(), "code": self.code(), "message": self.to_string() } })
            .to_string()
    }

    pub fn io(path: &std::path::Path, e: impl std::fmt::Display) -> Self {
        CliError::Io(format!("{}: {e}", path.display()))
    }

    pub fn invalid(e: impl std::fmt::Display) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<motionplan_core::vlm::ClientError> for CliError {
    fn from(e: motionplan_core::vlm::ClientError) -> Self {
        CliError::Upstream(e.to_string())
    }
}

impl From<motionplan_core::reason::StepError> for CliError {
    fn from(e: motionplan_core::reason::StepError) -> Self {
        use motionplan_core::reason::ReasonError;
        match e.source {
            ReasonError::MissingImage(_) | ReasonError::InvalidSet(_) | ReasonError::NoRounds => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Upstream(e.to_string()),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
