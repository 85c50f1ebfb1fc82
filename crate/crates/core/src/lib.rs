//! Gaze-based affect modelling.
//!
//! Raw eye-tracking logs flow through [`events`] (fixations, saccades, pupil
//! baseline), [`roi`] (facial-region labelling) and [`features`] into
//! per-trial tables, which feed the statistics in [`stats`] and the
//! classifiers in [`model`]. [`synth`] generates cohorts with planted
//! effects so every stage can be checked against known ground truth.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the precision used by the file formats and the CLI.

pub mod error;
pub mod events;
pub mod features;
pub mod io;
pub mod model;
pub mod pipeline;
pub mod roi;
pub mod scalar;
pub mod stats;
pub mod synth;
pub mod table;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Sample = io::GazeSample<f64>;
pub type Fixation = events::FixationEvent<f64>;
pub type Saccade = events::SaccadeEvent<f64>;
pub type Timeline = events::EventTimeline<f64>;
pub type Polygon = roi::ConvexPolygon<f64>;
pub type Hulls = roi::RegionHulls<f64>;
pub type Features = features::TrialFeatures<f64>;
pub type Sequence = features::StepSequence<f64>;
pub type Correlation = stats::CorrelationResult<f64>;
pub type MixedFit = stats::LmeFit<f64>;
pub type Net = model::Network<f64>;
pub type Example = model::Example<f64>;

pub type Sample32 = io::GazeSample<f32>;
pub type Timeline32 = events::EventTimeline<f32>;
pub type Features32 = features::TrialFeatures<f32>;
pub type Sequence32 = features::StepSequence<f32>;
pub type Net32 = model::Network<f32>;
pub type Example32 = model::Example<f32>;
