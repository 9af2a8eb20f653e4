//! Desk-scale trainable embedder, synthetic data and the training loop.

pub mod data;
pub mod experiment;
pub mod mlp;
pub mod optim;
pub mod train;

pub use data::{generate, generate_synthetic, sample_batch, BatchSpec, CenterLayout, Dataset, MiniBatch, Split, SyntheticSpec};
pub use experiment::{median, refinement_sweep, run_experiment, ExperimentRun, ExperimentSpec, SweepRow};
pub use mlp::{Activation, MlpConfig, MlpEmbedder};
pub use optim::{optimizer_step, OptimizerConfig, OptimizerKind, OptimizerState};
pub use train::{evaluate, train, EpochLog, TrainConfig, TrainOutcome};
