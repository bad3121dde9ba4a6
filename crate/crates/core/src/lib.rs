//! Action recognition from depth-map sequences.
//!
//! The pipeline normalizes depth sequences over time ([`normalize`]), derives
//! motion maps ([`motion`]), encodes frames into video descriptors
//! ([`features`]) and classifies them with linear SVMs whose probabilities can
//! be fused across streams ([`classify`]). [`pipeline`] wires the stages
//! together with on-disk caching.
//!
//! Numeric stages are generic over [`Scalar`] (`f32` or `f64`). The on-disk
//! formats store 32-bit reals, so the pipeline itself runs on `f32` data; the
//! aliases below name the common instantiations.

pub mod classify;
pub mod depth_io;
pub mod error;
pub mod features;
pub mod motion;
pub mod normalize;
pub mod pipeline;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type DepthFrame32 = depth_io::DepthFrame<f32>;
pub type DepthSequence32 = depth_io::DepthSequence<f32>;
pub type Mdmm32 = motion::Mdmm<f32>;
pub type PcaModel32 = features::PcaModel<f32>;
pub type Codebook32 = features::Codebook<f32>;
pub type VideoDescriptor32 = features::VideoDescriptor<f32>;

pub type LinearSvm64 = classify::LinearSvmModel<f64>;
pub type ProbabilityMatrix64 = classify::ProbabilityMatrix<f64>;
