use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("feature-schema hash mismatch: {left_name} has {left}, {right_name} has {right}")]
    SchemaMismatch {
        left_name: String,
        left: String,
        right_name: String,
        right: String,
    },
    #[error("inputs come from different runs: {0} (pass --force to compare anyway)")]
    MixedInputs(String),
    #[error(transparent)]
    Core(#[from] graphdeepar_core::Error),
}

pub type Result<T> = std::result::Result<T, CliError>;

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(path: impl Into<PathBuf>, message: impl std::fmt::Display) -> Self {
        CliError::Parse {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io { .. } => "io",
            CliError::Parse { .. } => "parse",
            CliError::Config(_) => "config",
            CliError::SchemaMismatch { .. } => "schema_mismatch",
            CliError::MixedInputs(_) => "mixed_inputs",
            CliError::Core(graphdeepar_core::Error::Config(_)) => "config",
            CliError::Core(graphdeepar_core::Error::SchemaMismatch { .. }) => "schema_mismatch",
            CliError::Core(_) => "data",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::SchemaMismatch { .. } | CliError::Core(graphdeepar_core::Error::SchemaMismatch { .. }) => 3,
            CliError::MixedInputs(_) => 4,
            CliError::Config(_) | CliError::Core(graphdeepar_core::Error::Config(_)) => 5,
            _ => 1,
        }
    }

    /// `error kind=<kind> code=<exit code> message=<JSON string>` on one line.
    pub fn machine_line(&self) -> String {
        let message = serde_json::to_string(&self.to_string()).unwrap_or_else(|_| "\"\"".into());
        format!("error kind={} code={} message={}", self.kind(), self.exit_code(), message)
    }
}
