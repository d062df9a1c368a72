use rem_core::RemError;
use rem_synth::SynthError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: {message}")]
    Range { line: u64, message: String },
    #[error("invalid configuration: {0}")]
    Validation(String),
    #[error("iteration {iteration}: {source}")]
    Iteration { iteration: usize, source: RemError },
    #[error(transparent)]
    Core(#[from] RemError),
    #[error(transparent)]
    Synth(#[from] SynthError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl HarnessError {
    /// Process exit code: 2 for bad input or configuration, 3 for failures
    /// while running.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Parse { .. } | HarnessError::Range { .. } | HarnessError::Validation(_) => 2,
            HarnessError::Json(_) => 2,
            HarnessError::Core(RemError::InvalidInput(_) | RemError::PatternFormat(_)) => 2,
            HarnessError::Synth(SynthError::Json(_) | SynthError::Core(RemError::InvalidInput(_))) => 2,
            _ => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, HarnessError>;
