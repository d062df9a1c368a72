//! Evaluation harness for radio environment map reconstruction: CSV
//! ingestion, the sparse-sampling Monte-Carlo protocol, sweeps over one
//! configuration axis and the `remap` command-line tool.

pub mod error;
pub mod eval;
pub mod ingest;
pub mod sweep;

pub use error::{HarnessError, Result};
pub use eval::{
    calibrate, median, monte_carlo_eval, monte_carlo_eval_trained, Access, AuditedSource, CampaignSource, Counters,
    ElevationBin, Environment, EnvironmentSpec, EvalConfig, EvalOptions, EvaluationReport, Method, Mode, ScoreRegion, TrainedModel,
};
pub use ingest::{ingest_measurements, read_measurements, write_measurements};
pub use sweep::{sweep, write_sweep_csv, SweepAxis, SweepPoint, SweepValue};
