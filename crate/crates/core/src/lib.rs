//! Personalized outfit ranking: a set-attention outfit encoder scored against user
//! embeddings, trained with N-pair ranking, false-negative distillation from a frozen teacher,
//! and outfit-level contrastive learning, plus neighborhood scoring for cold users.
//!
//! The numeric core is generic over [`Scalar`] (`f32` or `f64`); the aliases below pin the
//! training precision.

pub mod augment;
pub mod coldstart;
pub mod datagen;
pub mod diffcore;
pub mod encoder;
pub mod harness;
pub mod error;
pub mod metrics;
pub mod objectives;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

/// Training precision.
pub type Real = f32;
pub type Tensor = diffcore::Tensor<Real>;
pub type Tensor64 = diffcore::Tensor<f64>;
pub type Model = encoder::ModelParams<Real>;
pub type Model64 = encoder::ModelParams<f64>;
pub type LossConfig = objectives::LossConfig<Real>;
pub type TeacherCache = objectives::TeacherCache<Real>;
