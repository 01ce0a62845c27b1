//! N:M structured pruning masks for dense linear layers.
//!
//! Weight importance is scored with relative importance and activations,
//! input channels are permuted round-robin across pruning groups, and each
//! group's least important rows receive a diagonal pattern that keeps every
//! input channel connected. The resulting masks can be checked as bipartite
//! graphs for their degree and expansion guarantees.

pub mod error;
pub mod eval;
pub mod graph;
pub mod mask;
pub mod matrix;
pub mod metrics;
pub mod partition;
pub mod permute;
pub mod pipeline;
pub mod tensor_store;

pub use error::{Error, Result};
pub use mask::{PruneConfig, PruneMask};
pub use matrix::{Dense, ScoreMatrix, WeightMatrix};
pub use metrics::ActivationNorms;
pub use permute::ChannelPermutation;
pub use pipeline::Method;
