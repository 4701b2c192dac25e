//! Edge/server visual anomaly detection under bandwidth and compute limits.
//!
//! Numeric cores are generic over [`scalar::Scalar`]; the aliases below fix
//! the precision used by the wire formats.

pub mod channel;
pub mod codecs;
pub mod data;
pub mod detector;
pub mod metrics;
pub mod model;
pub mod pipeline;
pub mod pq;
pub mod scalar;
mod wire;

pub use wire::FormatError;

pub type FeatureTensor32 = model::FeatureTensor<f32>;
pub type FeatureStack32 = model::FeatureStack<f32>;
pub type PatchGrid32 = model::PatchGrid<f32>;
pub type Codebook32 = pq::Codebook<f32>;
pub type Codebook64 = pq::Codebook<f64>;
pub type MemoryBank32 = detector::MemoryBank<f32>;
pub type MemoryBank64 = detector::MemoryBank<f64>;
