use std::path::Path;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] orthofilt_core::Error),
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: byte {offset}: {detail}")]
    Format { path: String, offset: u64, detail: String },
    #[error("{path}: line {line}: {detail}")]
    Csv { path: String, line: u64, detail: String },
    #[error("{path}: {detail}")]
    Json { path: String, detail: String },
    /// A check ran to completion but its threshold was not met.
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// Stable snake_case tag for the report's `error.kind`.
    pub fn kind(&self) -> &'static str {
        use orthofilt_core::Error as E;
        match self {
            CliError::Core(e) => match e {
                E::DimensionMismatch { .. } => "dimension_mismatch",
                E::NonFinite(_) => "non_finite",
                E::DegenerateVector(_) => "degenerate_vector",
                E::DegenerateInput(_) => "degenerate_input",
                E::InvalidArgument(_) => "invalid_argument",
                E::UndefinedLoss => "undefined_loss",
                E::MissingNoise { .. } => "missing_noise",
                E::NumericalFailure { .. } => "numerical_failure",
            },
            CliError::Io { .. } => "io",
            CliError::Format { .. } => "token_format",
            CliError::Csv { .. } => "csv",
            CliError::Json { .. } => "json",
            CliError::CheckFailed(_) => "check_failed",
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
