//! Multi-stream sparse autoencoders with a shared latent space.
//!
//! Each input stream (a model or modality) gets its own encoder and decoder,
//! but all streams write into one latent space of dimension `L`. In Global
//! TopK mode the k active latents of a sample are chosen once from the sum of
//! every stream's logits, so all streams activate the same dimensions. A
//! cross-reconstruction term trains each stream's code to reconstruct the
//! other streams' inputs.
//!
//! Crate layout:
//!
//! - [`store`]: on-disk multi-stream feature files, labels, taxonomy, batch sampler
//! - [`synth`]: synthetic datasets with planted shared sparse codes
//! - [`model`]: parameters, forward pass, checkpoints
//! - [`train`]: losses, gradients, Adam with decoder-norm projection, dead latents
//! - [`eval`]: activation patterns, concept alignment, probes, retrieval

pub mod error;
pub mod eval;
pub mod model;
pub mod store;
pub mod synth;
pub mod train;

pub use error::{Result, SparcError};
pub use model::{ModelParams, SelectionMode, StreamParams};
pub use store::{FeatureBatch, StoreHandle};
pub use train::TrainConfig;
