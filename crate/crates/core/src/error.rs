use thiserror::Error;

/// Errors raised by the reconstruction and propagation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RemError {
    #[error("degenerate link: ground station and receiver coincide")]
    DegenerateLink,
    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("no samples within the selection radius")]
    NoNeighbors,
    #[error("linear system is singular")]
    SingularSystem,
    #[error("samples {first} and {second} share a location and the noise variance is zero")]
    DuplicateLocations { first: usize, second: usize },
    #[error("correlation fit diverged: weighted residual {residual} exceeds {threshold}")]
    FitDiverged { residual: f64, threshold: f64 },
    #[error("samples span less than one grid cell")]
    DegenerateExtent,
    #[error("no angular bin reached the minimum support")]
    NoSupportedBins,
    #[error("too many points for dense factorization: {got} > {max}")]
    TooManyPoints { got: usize, max: usize },
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("pattern file: {0}")]
    PatternFormat(String),
}

pub type Result<T> = std::result::Result<T, RemError>;
