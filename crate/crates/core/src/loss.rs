//! The group loss: cross-entropy on refined assignments, differentiated
//! exactly through every refinement step, the support product and the
//! similarity graph. Contrastive and triplet losses are kept as baselines.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};
use crate::refine::{self, init_assignments, RefinementTrace};
use crate::simgraph::{similarity, similarity_backward, SimilarityMode};

pub const LOG_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroupLossConfig {
    pub steps: usize,
    pub temperature: f64,
    pub mode: SimilarityMode,
    /// Treat `W` as a constant in the backward pass.
    pub detach_w: bool,
}

impl Default for GroupLossConfig {
    fn default() -> Self {
        Self {
            steps: 3,
            temperature: 0.1,
            mode: SimilarityMode::Clamped,
            detach_w: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossReport {
    pub loss: f64,
    pub d_logits: Matrix,
    pub d_features: Matrix,
    /// `F(X(t))` for `t = 0..=steps`; empty when no refinement ran.
    pub consistency: Vec<f64>,
}

/// Mean of `-ln(x_{i,y_i} + ε)` over non-anchor rows.
pub fn cross_entropy(x: &Matrix, labels: &[usize], anchors: &[bool]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..x.rows() {
        if anchors[i] {
            continue;
        }
        total -= (x.get(i, labels[i]) + LOG_EPS).ln();
        count += 1;
    }
    if count == 0 {
        return Err(Error::AllAnchors);
    }
    Ok(total / count as f64)
}

fn check_shapes(features: &Matrix, logits: &Matrix, labels: &[usize], anchors: &[bool]) -> Result<()> {
    let n = logits.rows();
    if features.rows() != n || labels.len() != n || anchors.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "features have {} rows, logits {n}, labels {}, anchors {}",
            features.rows(),
            labels.len(),
            anchors.len()
        )));
    }
    Ok(())
}

/// Forward and backward pass of the group loss on one mini-batch.
pub fn group_loss(
    features: &Matrix,
    logits: &Matrix,
    labels: &[usize],
    anchors: &[bool],
    cfg: &GroupLossConfig,
) -> Result<LossReport> {
    check_shapes(features, logits, labels, anchors)?;
    let (n, m) = logits.shape();
    let x0 = init_assignments(logits, cfg.temperature, anchors, labels)?;

    let trace: Option<RefinementTrace> = if cfg.steps > 0 {
        let w = similarity(features, cfg.mode)?;
        Some(refine::refine(&w, x0.clone(), cfg.steps)?)
    } else {
        None
    };
    let x_final = trace.as_ref().map_or(&x0, |t| t.last());
    let loss = cross_entropy(x_final.values(), labels, anchors)?;

    // dJ/dX(T)
    let active = anchors.iter().filter(|&&a| !a).count() as f64;
    let mut d_x = Matrix::zeros(n, m);
    for i in (0..n).filter(|&i| !anchors[i]) {
        let y = labels[i];
        d_x.set(i, y, -1.0 / (active * (x_final.values().get(i, y) + LOG_EPS)));
    }

    let mut d_w = Matrix::zeros(n, n);
    let consistency = match &trace {
        Some(trace) => {
            let w = trace.similarity().weights();
            for t in (0..trace.steps()).rev() {
                let x_prev = trace.iterates()[t].values();
                let x_next = trace.iterates()[t + 1].values();
                let pi = &trace.supports()[t];
                let q = &trace.normalizers()[t];

                // Row normalisation x' = u / q, u = x ⊙ π.
                let mut d_u = Matrix::zeros(n, m);
                let mut d_prev = Matrix::zeros(n, m);
                for i in 0..n {
                    if anchors[i] {
                        // copied rows: gradient passes straight through
                        d_prev.row_mut(i).copy_from_slice(d_x.row(i));
                        continue;
                    }
                    let g = d_x.row(i);
                    let centre = dot(g, x_next.row(i));
                    for (du, &gv) in d_u.row_mut(i).iter_mut().zip(g) {
                        *du = (gv - centre) / q[i];
                    }
                }
                // u = x ⊙ π
                let mut d_pi = Matrix::zeros(n, m);
                for i in 0..n {
                    for l in 0..m {
                        let du = d_u.get(i, l);
                        if du == 0.0 {
                            continue;
                        }
                        d_prev.add_at(i, l, du * pi.get(i, l));
                        d_pi.set(i, l, du * x_prev.get(i, l));
                    }
                }
                // π = W x
                let through_w = w.t_matmul(&d_pi)?;
                for (a, b) in d_prev.as_mut_slice().iter_mut().zip(through_w.as_slice()) {
                    *a += b;
                }
                let dw_t = d_pi.matmul_t(x_prev)?;
                for (a, b) in d_w.as_mut_slice().iter_mut().zip(dw_t.as_slice()) {
                    *a += b;
                }
                d_x = d_prev;
            }
            trace.consistency_trajectory()
        }
        None => Vec::new(),
    };

    // Softmax backward on non-anchor rows; anchor priors are constants.
    let probs = refine::temperature_softmax(logits, cfg.temperature)?;
    let mut d_logits = Matrix::zeros(n, m);
    for i in (0..n).filter(|&i| !anchors[i]) {
        let p = probs.row(i);
        let g = d_x.row(i);
        let centre = dot(g, p);
        for ((o, &pv), &gv) in d_logits.row_mut(i).iter_mut().zip(p).zip(g) {
            *o = pv * (gv - centre) / cfg.temperature;
        }
    }

    let d_features = if trace.is_some() && !cfg.detach_w {
        for i in 0..n {
            d_w.set(i, i, 0.0);
        }
        similarity_backward(features, &d_w, cfg.mode)?
    } else {
        Matrix::zeros(features.rows(), features.cols())
    };

    Ok(LossReport {
        loss,
        d_logits,
        d_features,
        consistency,
    })
}

fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `y‖a−b‖² + (1−y)·max(0, margin² − ‖a−b‖²)`.
pub fn contrastive_loss(fa: &[f64], fb: &[f64], same: bool, margin: f64) -> Result<f64> {
    if !(margin > 0.0) {
        return Err(Error::InvalidParameter {
            name: "margin",
            reason: "must be positive".into(),
        });
    }
    let d2 = squared_distance(fa, fb);
    Ok(if same {
        d2
    } else {
        (margin * margin - d2).max(0.0)
    })
}

/// `max(0, ‖a−p‖² − ‖a−n‖² + margin)`.
pub fn triplet_loss(fa: &[f64], fp: &[f64], fn_: &[f64], margin: f64) -> Result<f64> {
    if !(margin > 0.0) {
        return Err(Error::InvalidParameter {
            name: "margin",
            reason: "must be positive".into(),
        });
    }
    Ok((squared_distance(fa, fp) - squared_distance(fa, fn_) + margin).max(0.0))
}
