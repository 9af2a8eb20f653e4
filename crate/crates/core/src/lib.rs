//! Group loss for deep metric learning.
//!
//! A mini-batch of embeddings is turned into a Pearson similarity graph, the
//! network's softmax priors are refined over that graph with replicator
//! dynamics, and the cross-entropy of the refined assignments is
//! back-propagated exactly through every step. Around that core sit a small
//! trainable embedder, the inference-time toolbox (β-normalisation, mixed
//! pooling, leaky final activation, involution averaging, ensembles),
//! k-reciprocal re-ranking and the usual retrieval metrics.

#[cfg(feature = "cli")]
pub mod cli;
pub mod embednet;
pub mod error;
pub mod inference;
pub mod loss;
pub mod matrix;
pub mod metrics;
pub mod refine;
pub mod rerank;
pub mod seed;
pub mod simgraph;

pub use error::{Error, Result};
pub use matrix::Matrix;
