//! Generic diffusion process (genericDP) image restoration.
//!
//! One trainable multi-stage nonlinear diffusion model whose diffusion term
//! is shared by many Gaussian noise levels, each level keeping its own
//! reaction weight per stage. The crate covers the image plumbing, the
//! model, end-to-end training with analytic gradients and L-BFGS, and reuse
//! of the trained diffusion term as a prior for non-blind deconvolution via
//! half-quadratic splitting.

pub mod cli;
pub mod deconv;
pub mod error;
pub mod imagecore;
pub mod model;
pub mod training;

#[cfg(test)]
pub(crate) mod testutil;

pub use error::{Error, Result};
pub use model::{GenericDPModel, ModelConfig};
