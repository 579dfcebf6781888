//! Schema-presented categories with trainable functor models.
//!
//! A schema declares a category by generators (a directed multigraph) and
//! path equations. Each object is assigned a Euclidean space and each
//! generating arrow a parameterized differentiable map; the resulting family
//! of networks is trained with a Wasserstein adversarial loss plus a
//! path-equivalence loss that penalizes violations of the declared equations,
//! so the learned assignment converges toward a functor that respects them.
//!
//! Module layout:
//!
//! - [`schema`]: the schema DSL, free-category paths, rewriting and bounded
//!   congruence closure.
//! - [`autodiff`]: dense f64 tensors and a reverse-mode tape whose backward
//!   pass is itself recorded, so gradient-of-gradient terms (gradient
//!   penalty) are exact.
//! - [`para`]: parameterized differentiable maps with parameter-tracking
//!   composition and partial application.
//! - [`model`]: architectures over a schema, parameter assignment, path
//!   evaluation, functoriality residuals, dataset restriction, checkpoints.
//! - [`data`]: dataset functors, latent samplers, CSV loading, and the
//!   built-in synthetic tasks with exact ground-truth oracles.
//! - [`losses`]: adversarial loss, gradient penalty, path-equivalence loss,
//!   and the weighted total.
//! - [`metrics`]: energy distance and spread statistics used for evaluation.
//! - [`train`]: Adam, the alternating critic/generator loop, logging, and
//!   model evaluation.

pub mod autodiff;
pub mod data;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod para;
pub mod schema;
pub mod train;

pub use error::{Error, Result};
