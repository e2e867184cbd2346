//! SURE-tuned selection among linear smoothers in the Gaussian sequence model
//! `y = θ₀ + z`, `z ~ N(0, σ² I_n)`.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64` / `*32` aliases below fix the precision.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod concentration;
pub mod criteria;
pub mod error;
pub mod linalg;
pub mod montecarlo;
pub mod scalar;
pub mod sequence_model;
pub mod smoothers;

pub use error::{Error, Result};
pub use linalg::Matrix;
pub use scalar::Scalar;
pub use sequence_model::{
    derive_stream, make_theta0, GaussianSequenceModel, NoiseStream, Observation, ThetaKind,
};
pub use smoothers::{Smoother, SmootherFamily, SmootherSpec};

pub type Matrix64 = Matrix<f64>;
pub type Smoother64 = Smoother<f64>;
pub type SmootherFamily64 = SmootherFamily<f64>;
pub type GaussianSequenceModel64 = GaussianSequenceModel<f64>;
pub type ReplicateRecord64 = montecarlo::ReplicateRecord<f64>;

pub type Matrix32 = Matrix<f32>;
pub type Smoother32 = Smoother<f32>;
pub type SmootherFamily32 = SmootherFamily<f32>;
pub type GaussianSequenceModel32 = GaussianSequenceModel<f32>;
pub type ReplicateRecord32 = montecarlo::ReplicateRecord<f32>;
