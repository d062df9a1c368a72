//! Synthetic measurement campaigns: two-ray propagation plus correlated
//! shadow fading, optional deep-shadow blobs, antenna distortion and white
//! noise, with the ground truth kept for scoring.

pub mod campaign;
pub mod field;
pub mod spec;
pub mod trajectory;

use rem_core::RemError;
use thiserror::Error;

pub use campaign::{
    generate_campaign, generate_campaigns, read_measurements_csv, write_measurements_csv, Campaign, CampaignSpec,
    SceneRealization, SynthDocument,
};
pub use field::{sample_correlated_field, CorrelatedField, MAX_FIELD_POINTS};
pub use spec::{AntennaSpec, Blob, DistortionSpec, PropagationSpec, SceneSpec};
pub use trajectory::{Trajectory, TrajectoryKind, TrajectorySpec};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error(transparent)]
    Core(#[from] RemError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, SynthError>;
