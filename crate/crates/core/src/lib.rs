//! Diffusion-based disambiguation for partial label learning.
//!
//! Each training instance carries a set of candidate labels, exactly one of
//! which is correct. The crate builds pseudo-clean label vectors from the
//! overlap of a feature-space k-NN graph with candidate-set Jaccard
//! similarity, trains a conditional denoising diffusion model over label
//! vectors whose latent mean is a pre-trained classifier prior, and refines
//! the pseudo-clean labels each epoch through an estimated label transition
//! matrix.
//!
//! Module map:
//! - [`numkit`]: dense matrices, differentiable layers, the noise and prior
//!   networks, Adam, checkpoints.
//! - [`diffusion`]: noise schedule, forward/reverse processes, skip-step sampler, loss.
//! - [`disambig`]: k-NN adjacency, Jaccard matrix, pseudo-clean labels, transition matrix.
//! - [`pipeline`]: prior pre-training, the training loop, inference.
//! - [`data`]: the PLD file format, synthetic generators, splits.
//! - [`eval`]: accuracy, calibration error, report emission.
//! - [`cli`]: the `ddmp` command-line tool.

pub mod cli;
pub mod data;
pub mod diffusion;
pub mod disambig;
mod error;
pub mod eval;
pub mod numkit;
pub mod pipeline;

pub use error::{Error, Result};
pub use numkit::Matrix;
