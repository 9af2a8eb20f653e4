//! Browser demo. Each export takes plain numbers and returns a JSON string;
//! the `*_json` functions hold the logic so they can be tested natively.

use grouploss::embednet::{generate, run_experiment, CenterLayout, ExperimentSpec, SyntheticSpec};
use grouploss::metrics::{cmc, mean_average_precision, pairwise_euclidean, RankedRetrieval};
use grouploss::refine::{init_assignments, refine};
use grouploss::rerank::{rerank_with, DistanceMatrix, RerankConfig};
use grouploss::seed::{derive_seed, Stream};
use grouploss::simgraph::{similarity, SimilarityMode};
use grouploss::Matrix;
use serde::Serialize;
use wasm_bindgen::prelude::*;

fn mode_from(shifted: bool) -> SimilarityMode {
    if shifted {
        SimilarityMode::Shifted
    } else {
        SimilarityMode::Clamped
    }
}

fn to_json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

#[derive(Debug, Serialize)]
pub struct Trajectory {
    pub consistency: Vec<f64>,
    /// Argmax accuracy over the non-anchor rows after each step.
    pub accuracy: Vec<f64>,
}

/// Refines noisy priors on a small blob dataset (4 classes × 10 points)
/// with every third point anchored.
pub fn refine_trajectory_json(steps: usize, spread: f64, prior_noise: f64, shifted: bool, seed: u64) -> Result<String, String> {
    let data = generate(&SyntheticSpec {
        num_classes: 4,
        per_class: 10,
        dim: 6,
        spread,
        layout: CenterLayout::Uniform,
        seed: derive_seed(seed, Stream::Demo, 0),
    })
    .map_err(|e| e.to_string())?;
    let n = data.len();
    let w = similarity(&data.features, mode_from(shifted)).map_err(|e| e.to_string())?;
    // weak correct evidence buried in noise
    let noise = data_noise(n, 4, derive_seed(seed, Stream::Demo, 1));
    let logits = Matrix::from_fn(n, 4, |i, j| {
        let hit = if j == data.labels[i] { 1.0 } else { 0.0 };
        hit + prior_noise * noise.get(i, j)
    });
    let anchors: Vec<bool> = (0..n).map(|i| i % 3 == 0).collect();
    let x0 = init_assignments(&logits, 1.0, &anchors, &data.labels).map_err(|e| e.to_string())?;
    let trace = refine(&w, x0, steps).map_err(|e| e.to_string())?;
    let free: Vec<usize> = (0..n).filter(|&i| !anchors[i]).collect();
    let accuracy = trace
        .iterates()
        .iter()
        .map(|x| {
            let hits = free
                .iter()
                .filter(|&&i| {
                    let row = x.values().row(i);
                    let best = (0..row.len()).fold(0, |b, j| if row[j] > row[b] { j } else { b });
                    best == data.labels[i]
                })
                .count();
            hits as f64 / free.len() as f64
        })
        .collect();
    to_json(&Trajectory {
        consistency: trace.consistency_trajectory(),
        accuracy,
    })
}

/// Deterministic noise in [-1, 1] from the seed.
fn data_noise(n: usize, m: usize, seed: u64) -> Matrix {
    let mut state = seed;
    Matrix::from_fn(n, m, |_, _| {
        state = derive_seed(state, Stream::Demo, 2);
        (state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    })
}

#[derive(Debug, Serialize)]
pub struct TrainingCurve {
    pub loss: Vec<f64>,
    /// Test Recall@1 per epoch; `null` where the embeddings collapsed.
    pub recall_at_1: Vec<Option<f64>>,
    pub nmi: Vec<Option<f64>>,
}

/// Trains the small embedder on synthetic blobs and reports per-epoch curves.
pub fn train_curve_json(steps: usize, spread: f64, epochs: usize, antipodal: bool, shifted: bool, seed: u64) -> Result<String, String> {
    let mut spec = ExperimentSpec {
        spread,
        layout: if antipodal { CenterLayout::Antipodal } else { CenterLayout::Uniform },
        ..ExperimentSpec::default()
    };
    spec.train.epochs = epochs;
    spec.train.loss.steps = steps;
    spec.train.loss.mode = mode_from(shifted);
    let run = run_experiment(&spec, ExperimentSpec::run_seed(seed, 0)).map_err(|e| e.to_string())?;
    let log = &run.outcome.log;
    to_json(&TrainingCurve {
        loss: log.iter().map(|e| e.mean_loss).collect(),
        recall_at_1: log.iter().map(|e| e.test.as_ref().and_then(|t| t.recall_at(1))).collect(),
        nmi: log.iter().map(|e| e.test.as_ref().map(|t| t.nmi)).collect(),
    })
}

#[derive(Debug, Serialize)]
pub struct RerankSummary {
    pub queries: usize,
    pub gallery: usize,
    pub cmc1_before: f64,
    pub map_before: f64,
    pub cmc1_after: f64,
    pub map_after: f64,
}

/// Query/gallery retrieval on raw blob features, before and after re-ranking.
pub fn rerank_demo_json(spread: f64, k1: usize, k2: usize, lambda: f64, seed: u64) -> Result<String, String> {
    let (classes, per_class, per_query) = (6, 12, 3);
    let data = generate(&SyntheticSpec {
        num_classes: classes,
        per_class,
        dim: 8,
        spread,
        layout: CenterLayout::Uniform,
        seed: derive_seed(seed, Stream::Demo, 3),
    })
    .map_err(|e| e.to_string())?;
    let (q_idx, g_idx): (Vec<usize>, Vec<usize>) = (0..data.len()).partition(|i| i % per_class < per_query);
    let q = data.features.select_rows(&q_idx);
    let g = data.features.select_rows(&g_idx);
    let ql: Vec<usize> = q_idx.iter().map(|&i| data.labels[i]).collect();
    let gl: Vec<usize> = g_idx.iter().map(|&i| data.labels[i]).collect();

    let score = |d: &Matrix| -> Result<(f64, f64), String> {
        let ranked = RankedRetrieval::query_gallery(d, &ql, &gl).map_err(|e| e.to_string())?;
        Ok((
            cmc(&ranked, 1).map_err(|e| e.to_string())?,
            mean_average_precision(&ranked).map_err(|e| e.to_string())?,
        ))
    };
    let before = score(&pairwise_euclidean(&q, &g).map_err(|e| e.to_string())?)?;
    let dist = DistanceMatrix::from_features(&q, &g).map_err(|e| e.to_string())?;
    let cfg = RerankConfig {
        k1,
        k2,
        lambda,
        ..RerankConfig::default()
    };
    let after = score(&rerank_with(&dist, &cfg).map_err(|e| e.to_string())?)?;
    to_json(&RerankSummary {
        queries: q_idx.len(),
        gallery: g_idx.len(),
        cmc1_before: before.0,
        map_before: before.1,
        cmc1_after: after.0,
        map_after: after.1,
    })
}

#[wasm_bindgen]
pub fn refine_trajectory(steps: usize, spread: f64, prior_noise: f64, shifted: bool, seed: u32) -> Result<String, JsError> {
    refine_trajectory_json(steps, spread, prior_noise, shifted, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn train_curve(steps: usize, spread: f64, epochs: usize, antipodal: bool, shifted: bool, seed: u32) -> Result<String, JsError> {
    train_curve_json(steps, spread, epochs, antipodal, shifted, u64::from(seed)).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn rerank_demo(spread: f64, k1: usize, k2: usize, lambda: f64, seed: u32) -> Result<String, JsError> {
    rerank_demo_json(spread, k1, k2, lambda, u64::from(seed)).map_err(|e| JsError::new(&e))
}
