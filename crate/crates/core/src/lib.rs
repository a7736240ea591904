//! Retrieval-augmented binder design: a block-level equivariant VAE, a
//! retrieval database over its latent space, and a latent diffusion model
//! conditioned on retrieved interfaces.

pub mod error;
pub mod cvae;
pub mod geometry;
pub mod ldm;
pub mod metrics;
pub mod molgraph;
pub mod nn;
pub mod pipeline;
pub mod retrieval;

pub use error::{Error, Result};
pub use ragbind_autograd::Mat;
