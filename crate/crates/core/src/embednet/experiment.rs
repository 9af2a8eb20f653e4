//! Synthetic train/evaluate runs and the refinement-step sweep.
//!
//! Run `i` of a master seed uses `s = derive_seed(master, Run, i)`; its data,
//! initial weights and batches draw from the `Data`, `Init` and `Batches`
//! streams of `s`.

use serde::{Deserialize, Serialize};

use super::data::{generate, CenterLayout, Dataset, SyntheticSpec};
use super::mlp::{MlpConfig, MlpEmbedder};
use super::train::{train, TrainConfig, TrainOutcome};
use crate::error::{Error, Result};
use crate::loss::GroupLossConfig;
use crate::seed::{derive_seed, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub num_classes: usize,
    pub per_class: usize,
    /// Last `test_per_class` members of every class are held out.
    pub test_per_class: usize,
    pub dim: usize,
    pub spread: f64,
    pub layout: CenterLayout,
    pub hidden: Vec<usize>,
    pub pool: usize,
    pub embedding_dim: usize,
    pub train: TrainConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            num_classes: 8,
            per_class: 50,
            test_per_class: 25,
            dim: 8,
            spread: 0.5,
            layout: CenterLayout::Uniform,
            hidden: vec![64],
            pool: 4,
            embedding_dim: 32,
            train: TrainConfig {
                loss: GroupLossConfig {
                    temperature: 1.0,
                    ..GroupLossConfig::default()
                },
                ..TrainConfig::default()
            },
        }
    }
}

impl ExperimentSpec {
    pub fn run_seed(master: u64, index: usize) -> u64 {
        derive_seed(master, Stream::Run, index as u64)
    }

    pub fn model_config(&self) -> MlpConfig {
        MlpConfig {
            input_dim: self.dim,
            hidden: self.hidden.clone(),
            pool: self.pool,
            embedding_dim: self.embedding_dim,
            num_classes: self.num_classes,
        }
    }

    /// Train and test splits for run seed `s`.
    pub fn datasets(&self, s: u64) -> Result<(Dataset, Dataset)> {
        let data = generate(&SyntheticSpec {
            num_classes: self.num_classes,
            per_class: self.per_class,
            dim: self.dim,
            spread: self.spread,
            layout: self.layout,
            seed: derive_seed(s, Stream::Data, 0),
        })?;
        data.holdout(self.test_per_class)
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub seed: u64,
    pub outcome: TrainOutcome,
    /// Final-epoch test Recall@1; 0 when the final test embeddings collapsed.
    pub recall_at_1: f64,
    pub nmi: f64,
}

pub fn run_experiment(spec: &ExperimentSpec, s: u64) -> Result<ExperimentRun> {
    let (train_set, test_set) = spec.datasets(s)?;
    let net = MlpEmbedder::init(spec.model_config(), derive_seed(s, Stream::Init, 0))?;
    let cfg = TrainConfig { seed: s, ..spec.train.clone() };
    let outcome = train(&train_set, Some(&test_set), net, &cfg)?;
    let last = outcome.log.last().and_then(|e| e.test.as_ref());
    let (recall_at_1, nmi) = match last {
        Some(r) => (r.recall_at(1).unwrap_or(0.0), r.nmi),
        None => (0.0, 0.0),
    };
    Ok(ExperimentRun {
        seed: s,
        outcome,
        recall_at_1,
        nmi,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub steps: usize,
    pub recall_at_1: Vec<f64>,
    pub nmi: Vec<f64>,
    pub median_recall_at_1: f64,
    pub median_nmi: f64,
}

pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyList);
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Ok(if v.len() % 2 == 1 { v[m] } else { 0.5 * (v[m - 1] + v[m]) })
}

/// One row per entry of `steps`, each over runs `0..seeds` of `master`.
pub fn refinement_sweep(spec: &ExperimentSpec, steps: &[usize], master: u64, seeds: usize) -> Result<Vec<SweepRow>> {
    steps
        .iter()
        .map(|&t| {
            let mut s = spec.clone();
            s.train.loss.steps = t;
            let runs = (0..seeds)
                .map(|i| run_experiment(&s, ExperimentSpec::run_seed(master, i)))
                .collect::<Result<Vec<_>>>()?;
            let recall_at_1: Vec<f64> = runs.iter().map(|r| r.recall_at_1).collect();
            let nmi: Vec<f64> = runs.iter().map(|r| r.nmi).collect();
            Ok(SweepRow {
                steps: t,
                median_recall_at_1: median(&recall_at_1)?,
                median_nmi: median(&nmi)?,
                recall_at_1,
                nmi,
            })
        })
        .collect()
}
