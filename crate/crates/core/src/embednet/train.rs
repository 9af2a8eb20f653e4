//! Deterministic training loop: class-balanced batches, group loss, step
//! decay of the learning rate at the halfway epoch, per-epoch evaluation.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{sample_batch, BatchSpec, Dataset};
use super::mlp::MlpEmbedder;
use super::optim::{optimizer_step, OptimizerConfig, OptimizerState};
use crate::error::{Error, Result};
use crate::inference::{inference_pipeline, InferenceConfig};
use crate::loss::{group_loss, GroupLossConfig};
use crate::metrics::{retrieval_report, RetrievalReport};
use crate::seed::{derive_seed, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Leading epochs trained with plain softmax cross-entropy (no refinement).
    pub warmup_epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerConfig,
    pub batch: BatchSpec,
    pub loss: GroupLossConfig,
    /// Defaults to `train size / batch size` (at least one).
    pub batches_per_epoch: Option<usize>,
    /// Skip batches whose loss is undefined (constant embedding rows, empty
    /// support) instead of aborting; skipped batches are counted in the log.
    pub skip_degenerate: bool,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            warmup_epochs: 2,
            learning_rate: 0.05,
            optimizer: OptimizerConfig::default(),
            batch: BatchSpec::default(),
            loss: GroupLossConfig::default(),
            batches_per_epoch: None,
            skip_degenerate: true,
            seed: 0,
        }
    }
}

impl TrainConfig {
    /// Learning rate for a 0-based epoch: `lr₀` before the halfway point, `0.1·lr₀` after.
    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        if 2 * epoch >= self.epochs {
            0.1 * self.learning_rate
        } else {
            self.learning_rate
        }
    }

    pub fn refinement_steps_at(&self, epoch: usize) -> usize {
        if epoch < self.warmup_epochs {
            0
        } else {
            self.loss.steps
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.batch.validate()?;
        if !(self.learning_rate >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "learning_rate",
                reason: "must be non-negative".into(),
            });
        }
        if !(self.loss.temperature > 0.0) {
            return Err(Error::NonPositiveTemperature(self.loss.temperature));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub learning_rate: f64,
    pub refinement_steps: usize,
    pub mean_loss: f64,
    /// Batch-mean `F(X(t))` for `t = 0..=steps`; empty during warm-up.
    pub consistency: Vec<f64>,
    pub skipped_batches: usize,
    /// `None` without a test split, or when some test embedding collapsed to zero.
    pub test: Option<RetrievalReport>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub net: MlpEmbedder,
    pub log: Vec<EpochLog>,
}

/// Runs `cfg.epochs` epochs on `train`, evaluating on `test` after each epoch.
pub fn train(train: &Dataset, test: Option<&Dataset>, mut net: MlpEmbedder, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, Stream::Batches, 0));
    let mut state = OptimizerState::default();
    let batches = cfg
        .batches_per_epoch
        .unwrap_or_else(|| (train.len() / cfg.batch.batch_size()).max(1));
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate_at(epoch);
        let loss_cfg = GroupLossConfig {
            steps: cfg.refinement_steps_at(epoch),
            ..cfg.loss
        };
        let mut loss_sum = 0.0;
        let mut consistency: Vec<f64> = Vec::new();
        let mut skipped = 0;
        for step in 0..batches {
            let wrap = |e: Error| Error::Training {
                epoch,
                step,
                source: Box::new(e),
            };
            let batch = sample_batch(train, &cfg.batch, &mut rng).map_err(wrap)?;
            let inputs = train.features.select_rows(&batch.indices);
            let labels: Vec<usize> = batch.indices.iter().map(|&i| train.labels[i]).collect();
            let cache = net.forward(&inputs).map_err(wrap)?;
            let report = match group_loss(&cache.embeddings, &cache.logits, &labels, &batch.anchors, &loss_cfg) {
                Ok(r) => r,
                Err(Error::ZeroVarianceRow(_) | Error::DegenerateSupport { .. }) if cfg.skip_degenerate => {
                    skipped += 1;
                    continue;
                }
                Err(e) => return Err(wrap(e)),
            };
            let grads = net.backward(&cache, &report.d_features, &report.d_logits).map_err(wrap)?;
            optimizer_step(&mut net.params_mut(), &grads.params(), &mut state, &cfg.optimizer, lr).map_err(wrap)?;
            if !net.is_finite() {
                return Err(wrap(Error::InvalidParameter {
                    name: "parameters",
                    reason: "diverged to non-finite values".into(),
                }));
            }
            loss_sum += report.loss;
            if consistency.is_empty() {
                consistency = vec![0.0; report.consistency.len()];
            }
            for (acc, f) in consistency.iter_mut().zip(&report.consistency) {
                *acc += f;
            }
        }
        let used = (batches - skipped).max(1) as f64;
        consistency.iter_mut().for_each(|f| *f /= used);
        // A collapsed embedding cannot be normalised; that epoch gets no report.
        let test_report = match test {
            Some(t) => match evaluate(&net, t, &InferenceConfig::default(), derive_seed(cfg.seed, Stream::KMeans, epoch as u64)) {
                Ok(r) => Some(r),
                Err(Error::ZeroVector) => None,
                Err(e) => return Err(e),
            },
            None => None,
        };
        log.push(EpochLog {
            epoch,
            learning_rate: lr,
            refinement_steps: loss_cfg.steps,
            mean_loss: loss_sum / used,
            consistency,
            skipped_batches: skipped,
            test: test_report,
        });
    }
    Ok(TrainOutcome { net, log })
}

/// Single-set retrieval and clustering report of `net` on `data`.
pub fn evaluate(net: &MlpEmbedder, data: &Dataset, cfg: &InferenceConfig, seed: u64) -> Result<RetrievalReport> {
    let emb = inference_pipeline(net, &data.features, cfg)?;
    retrieval_report(&emb, &data.labels, seed)
}
