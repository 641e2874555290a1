//! Complementary contrastive learning for graph-level representations.
//!
//! The pipeline draws two augmented views of every graph, encodes both with a
//! shared GIN encoder, erases the coordinates of the second view's embedding
//! that dominate the first view's embedding, and trains encoder and
//! projection head with a batched InfoNCE objective. Downstream quality is
//! scored with a frozen-encoder linear probe.
//!
//! Modules, bottom-up:
//!
//! - [`graphdata`]: graphs, datasets, TUDataset text format, synthetic data.
//! - [`augment`]: stochastic graph augmentations and view-pair policies.
//! - [`ndiff`]: tensors and reverse-mode differentiation.
//! - [`encoder`]: GIN layers, sum-pooling readout, projection head.
//! - [`cocoloss`]: min-max scaling, erase mask, batched InfoNCE.
//! - [`trainer`]: the training loop, Adam, checkpoints.
//! - [`eval`]: embedding extraction, k-fold linear probe, diagnostics.

pub mod augment;
pub mod cocoloss;
pub mod encoder;
pub mod eval;
pub mod exec;
pub mod graphdata;
pub mod ndiff;
pub mod rng;
pub mod trainer;

pub use exec::Execution;
