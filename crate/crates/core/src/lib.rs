//! Radio environment map reconstruction from sparse UAV measurements.
//!
//! A deterministic two-ray propagation model supplies the mean received
//! power; the shadow-fading residual is recovered with Kriging, Gaussian
//! process regression, or GPR refined by nuclear-norm matrix completion.
//! The UAV antenna pattern can be calibrated in the field and folded back
//! into the propagation model.
//!
//! Every routine is generic over the scalar ([`scalar::Real`], `f32` or
//! `f64`); the aliases at the crate root fix it to `f64`.

pub mod calibration;
pub mod completion;
pub mod error;
pub mod geo;
pub mod gpr;
pub mod interp;
pub mod kriging;
pub mod optim;
pub mod propagation;
pub mod scalar;
pub mod shadow;

pub use error::{RemError, Result};
pub use kriging::Variant;
pub use propagation::Polarization;
pub use scalar::Real;
pub use shadow::ReferenceModel;

pub type GeoPoint = geo::GeoPoint<f64>;
pub type LinkGeometry = geo::LinkGeometry<f64>;
pub type LocalFrame = geo::LocalFrame<f64>;
pub type AntennaPattern = propagation::AntennaPattern<f64>;
pub type PropagationConfig = propagation::PropagationConfig<f64>;
pub type Measurement = shadow::Measurement<f64>;
pub type SfSample = shadow::SfSample<f64>;
pub type CorrelationModel = shadow::CorrelationModel<f64>;
pub type KrigingConfig = kriging::KrigingConfig<f64>;
pub type KrigingPrediction = kriging::KrigingPrediction<f64>;
pub type NormalScore = kriging::NormalScore<f64>;
pub type GprModel = gpr::GprModel<f64>;
pub type GridSpec = completion::GridSpec<f64>;
pub type ShadowGrid = completion::ShadowGrid<f64>;
pub type McConfig = completion::McConfig<f64>;
pub type McPipeline = completion::McPipeline<f64>;
pub type CalibratedDelta = calibration::CalibratedDelta<f64>;
pub type EffectivePattern = calibration::EffectivePattern<f64>;
