//! SGD with momentum and an Adam-style update, both with L2 weight decay.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd { momentum: f64 },
    Adam { beta1: f64, beta2: f64, eps: f64 },
}

impl Default for OptimizerKind {
    fn default() -> Self {
        Self::Sgd { momentum: 0.9 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub kind: OptimizerKind,
    pub weight_decay: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            kind: OptimizerKind::default(),
            weight_decay: 0.0,
        }
    }
}

/// Per-tensor moment buffers.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
    steps: u64,
}

impl OptimizerState {
    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.first
    }
}

/// One update of every tensor in `params` with the matching `grads`.
///
/// SGD: `v ← μv + g + λp; p ← p − lr·v`.
/// Adam: `m ← β₁m + (1−β₁)g'`, `s ← β₂s + (1−β₂)g'²`, `p ← p − lr·m̂/(√ŝ + ε)`
/// with `g' = g + λp` and bias-corrected `m̂, ŝ`.
pub fn optimizer_step(
    params: &mut [&mut [f64]],
    grads: &[&[f64]],
    state: &mut OptimizerState,
    cfg: &OptimizerConfig,
    lr: f64,
) -> Result<()> {
    if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
        return Err(Error::ShapeMismatch("parameter and gradient tensors differ".into()));
    }
    if state.first.is_empty() {
        state.first = params.iter().map(|p| vec![0.0; p.len()]).collect();
        if matches!(cfg.kind, OptimizerKind::Adam { .. }) {
            state.second = state.first.clone();
        }
    }
    state.steps += 1;
    let wd = cfg.weight_decay;
    match cfg.kind {
        OptimizerKind::Sgd { momentum } => {
            for ((p, g), v) in params.iter_mut().zip(grads).zip(&mut state.first) {
                for ((pv, &gv), vv) in p.iter_mut().zip(*g).zip(v.iter_mut()) {
                    *vv = momentum * *vv + gv + wd * *pv;
                    *pv -= lr * *vv;
                }
            }
        }
        OptimizerKind::Adam { beta1, beta2, eps } => {
            let t = state.steps as i32;
            let c1 = 1.0 - beta1.powi(t);
            let c2 = 1.0 - beta2.powi(t);
            for (((p, g), m), s) in params
                .iter_mut()
                .zip(grads)
                .zip(&mut state.first)
                .zip(&mut state.second)
            {
                for (((pv, &gv), mv), sv) in p.iter_mut().zip(*g).zip(m.iter_mut()).zip(s.iter_mut()) {
                    let g = gv + wd * *pv;
                    *mv = beta1 * *mv + (1.0 - beta1) * g;
                    *sv = beta2 * *sv + (1.0 - beta2) * g * g;
                    *pv -= lr * (*mv / c1) / ((*sv / c2).sqrt() + eps);
                }
            }
        }
    }
    Ok(())
}
