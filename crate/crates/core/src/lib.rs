//! Evidential multi-modality classification.
//!
//! Each modality's network ends in per-class Normal-Inverse-Gamma heads. The
//! heads are converted to Student's-t marginals, fused per class with
//! dof-proportional confidence weights, and trained with NIG and Student's-t
//! likelihoods, cross-entropy terms and a confidence-ranking hinge.
//!
//! The distribution, fusion and loss math is generic over [`Real`] (`f32` or
//! `f64`); the network, data and metrics work in `f64`.

pub mod baseline;
pub mod data;
pub mod error;
pub mod evidential;
pub mod experiment;
pub mod fusion;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod scalar;
pub mod softmax;
pub mod special;

pub use error::{Error, Result};
pub use evidential::{NigParams, StudentT, UncertaintyReport};
pub use fusion::{FusedPrediction, FusionWeights};
pub use losses::{LossBreakdown, LossWeights};
pub use scalar::Real;

pub type NigParams64 = NigParams<f64>;
pub type NigParams32 = NigParams<f32>;
pub type StudentT64 = StudentT<f64>;
pub type StudentT32 = StudentT<f32>;
pub type FusionWeights64 = FusionWeights<f64>;
pub type FusedPrediction64 = FusedPrediction<f64>;
pub type LossBreakdown64 = LossBreakdown<f64>;
pub type LossWeights64 = LossWeights<f64>;
pub type UncertaintyReport64 = UncertaintyReport<f64>;
