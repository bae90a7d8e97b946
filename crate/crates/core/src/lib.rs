//! Past pose inference from thermal frames.

pub mod dataset;
pub mod error;
pub mod eval;
pub mod frame;
pub mod heatmap;
pub mod models;
pub mod nn;
pub mod pipeline;
pub mod pose;
pub mod scalar;
pub mod skeleton;
pub mod synth;
pub mod vocab;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Precision used by the trained models and the command-line tools.
pub type Real = f32;
pub type Point2D = pose::Point<Real>;
pub type Pose2D = pose::Pose<Real>;
pub type Frame = frame::ThermalFrame<Real>;
pub type Heatmap = heatmap::HeatmapGrid<Real>;
pub type Pair = dataset::SamplePair<Real>;
pub type Clip = dataset::ClipRecord<Real>;
pub type Vocabulary = vocab::PoseTypeVocabulary<Real>;
pub type Models = pipeline::PastPoseModels<Real>;
pub type Inference = pipeline::InferenceResult<Real>;

/// Double-precision geometry, used by the simulator and the oracles.
pub type Pose2D64 = pose::Pose<f64>;
pub type Point2D64 = pose::Point<f64>;
