//! Replicator-dynamics label refinement.
//!
//! Soft assignments `X` (one probability row per sample) are repeatedly
//! multiplied by the support `Π = W·X` the rest of the batch lends each
//! label, then row-normalised. With non-negative `W` every step weakly
//! increases the consistency `F(X) = Σ_ij Σ_λ w_ij x_iλ x_jλ`. Anchor rows
//! are one-hot at their ground-truth label and never change.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::simgraph::SimilarityMatrix;

/// Underflow guard on the per-row normaliser.
pub const NORMALIZER_FLOOR: f64 = 1e-30;

/// Row-stochastic image/label soft assignments with an anchor mask.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignmentMatrix {
    x: Matrix,
    anchors: Vec<bool>,
    labels: Vec<usize>,
}

impl AssignmentMatrix {
    /// Validates and wraps `x`. Rows must be non-negative and sum to one;
    /// anchor rows must be one-hot at their label.
    pub fn new(x: Matrix, anchors: Vec<bool>, labels: Vec<usize>) -> Result<Self> {
        let (n, m) = x.shape();
        if anchors.len() != n || labels.len() != n {
            return Err(Error::ShapeMismatch(format!(
                "{n} assignment rows but {} anchor flags and {} labels",
                anchors.len(),
                labels.len()
            )));
        }
        for (i, &l) in labels.iter().enumerate() {
            if l >= m {
                return Err(Error::LabelOutOfRange {
                    row: i,
                    label: l,
                    classes: m,
                });
            }
        }
        for i in 0..n {
            let row = x.row(i);
            if row.iter().any(|&v| !(v >= 0.0)) || (row.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidParameter {
                    name: "x",
                    reason: format!("row {i} is not a probability distribution"),
                });
            }
            if anchors[i] && row.iter().enumerate().any(|(j, &v)| v != f64::from(j == labels[i])) {
                return Err(Error::InvalidParameter {
                    name: "x",
                    reason: format!("anchor row {i} is not one-hot at label {}", labels[i]),
                });
            }
        }
        Ok(Self { x, anchors, labels })
    }

    pub fn values(&self) -> &Matrix {
        &self.x
    }

    pub fn anchors(&self) -> &[bool] {
        &self.anchors
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn rows(&self) -> usize {
        self.x.rows()
    }

    pub fn classes(&self) -> usize {
        self.x.cols()
    }

    pub fn into_values(self) -> Matrix {
        self.x
    }
}

/// Row-wise `softmax(logits / temperature)`, max-subtracted.
pub fn temperature_softmax(logits: &Matrix, temperature: f64) -> Result<Matrix> {
    if !(temperature > 0.0) {
        return Err(Error::NonPositiveTemperature(temperature));
    }
    let (n, m) = logits.shape();
    let mut out = Matrix::zeros(n, m);
    for i in 0..n {
        let z = logits.row(i);
        let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let row = out.row_mut(i);
        let mut total = 0.0;
        for (o, &v) in row.iter_mut().zip(z) {
            *o = ((v - max) / temperature).exp();
            total += *o;
        }
        row.iter_mut().for_each(|v| *v /= total);
    }
    Ok(out)
}

/// Temperature-softmax priors with anchor rows replaced by one-hot labels.
pub fn init_assignments(
    logits: &Matrix,
    temperature: f64,
    anchors: &[bool],
    labels: &[usize],
) -> Result<AssignmentMatrix> {
    let (n, m) = logits.shape();
    if anchors.len() != n || labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} logit rows but {} anchor flags and {} labels",
            anchors.len(),
            labels.len()
        )));
    }
    for (i, &l) in labels.iter().enumerate() {
        if l >= m {
            return Err(Error::LabelOutOfRange {
                row: i,
                label: l,
                classes: m,
            });
        }
    }
    let mut x = temperature_softmax(logits, temperature)?;
    for (i, _) in anchors.iter().enumerate().filter(|(_, &a)| a) {
        let row = x.row_mut(i);
        row.iter_mut().for_each(|v| *v = 0.0);
        row[labels[i]] = 1.0;
    }
    Ok(AssignmentMatrix {
        x,
        anchors: anchors.to_vec(),
        labels: labels.to_vec(),
    })
}

/// Support matrix `Π = W·X`.
pub fn support(w: &SimilarityMatrix, x: &AssignmentMatrix) -> Result<Matrix> {
    w.weights().matmul(x.values())
}

/// One replicator step. Returns the new assignments and the per-row
/// normalisers `q_i = Σ_μ x_iμ π_iμ` (zero for anchor rows, which are copied).
pub fn refine_step_with_normalizers(
    x: &AssignmentMatrix,
    pi: &Matrix,
) -> Result<(AssignmentMatrix, Vec<f64>)> {
    let (n, m) = x.values().shape();
    if pi.shape() != (n, m) {
        return Err(Error::ShapeMismatch(format!(
            "support is {}x{}, assignments are {n}x{m}",
            pi.rows(),
            pi.cols()
        )));
    }
    let mut next = x.values().clone();
    let mut q = vec![0.0; n];
    for i in 0..n {
        if x.anchors[i] {
            continue;
        }
        let row = next.row_mut(i);
        let mut total = 0.0;
        for (v, &p) in row.iter_mut().zip(pi.row(i)) {
            *v *= p;
            total += *v;
        }
        if !(total > NORMALIZER_FLOOR) {
            return Err(Error::DegenerateSupport { row: i, step: 0 });
        }
        row.iter_mut().for_each(|v| *v /= total);
        q[i] = total;
    }
    Ok((
        AssignmentMatrix {
            x: next,
            anchors: x.anchors.clone(),
            labels: x.labels.clone(),
        },
        q,
    ))
}

/// `x'_iλ = x_iλ π_iλ / Σ_μ x_iμ π_iμ` on non-anchor rows; anchors copied.
pub fn refine_step(x: &AssignmentMatrix, pi: &Matrix) -> Result<AssignmentMatrix> {
    refine_step_with_normalizers(x, pi).map(|(next, _)| next)
}

/// Everything the backward pass needs: all iterates, supports and normalisers.
#[derive(Debug, Clone)]
pub struct RefinementTrace {
    xs: Vec<AssignmentMatrix>,
    pis: Vec<Matrix>,
    qs: Vec<Vec<f64>>,
    w: SimilarityMatrix,
}

impl RefinementTrace {
    /// `X(0) … X(T)`.
    pub fn iterates(&self) -> &[AssignmentMatrix] {
        &self.xs
    }

    pub fn supports(&self) -> &[Matrix] {
        &self.pis
    }

    pub fn normalizers(&self) -> &[Vec<f64>] {
        &self.qs
    }

    pub fn similarity(&self) -> &SimilarityMatrix {
        &self.w
    }

    pub fn steps(&self) -> usize {
        self.pis.len()
    }

    pub fn last(&self) -> &AssignmentMatrix {
        self.xs.last().expect("trace always holds X(0)")
    }

    /// `F(X(t))` for every stored iterate.
    pub fn consistency_trajectory(&self) -> Vec<f64> {
        self.xs
            .iter()
            .map(|x| consistency(&self.w, x.values()))
            .collect()
    }
}

/// Runs exactly `steps` replicator updates from `x0`.
pub fn refine(w: &SimilarityMatrix, x0: AssignmentMatrix, steps: usize) -> Result<RefinementTrace> {
    if w.len() != x0.rows() {
        return Err(Error::ShapeMismatch(format!(
            "similarity is {}x{0}, assignments have {} rows",
            w.len(),
            x0.rows()
        )));
    }
    let mut xs = Vec::with_capacity(steps + 1);
    let mut pis = Vec::with_capacity(steps);
    let mut qs = Vec::with_capacity(steps);
    xs.push(x0);
    for step in 0..steps {
        let current = xs.last().expect("non-empty");
        let pi = support(w, current)?;
        let (next, q) = refine_step_with_normalizers(current, &pi).map_err(|e| match e {
            Error::DegenerateSupport { row, .. } => Error::DegenerateSupport { row, step },
            other => other,
        })?;
        pis.push(pi);
        qs.push(q);
        xs.push(next);
    }
    Ok(RefinementTrace {
        xs,
        pis,
        qs,
        w: w.clone(),
    })
}

/// `F(X) = Σ_i Σ_j Σ_λ w_ij x_iλ x_jλ`.
pub fn consistency(w: &SimilarityMatrix, x: &Matrix) -> f64 {
    let wm = w.weights();
    let n = wm.rows();
    let mut total = 0.0;
    for i in 0..n {
        let xi = x.row(i);
        for j in 0..n {
            let wij = wm.get(i, j);
            if wij == 0.0 {
                continue;
            }
            total += wij * crate::matrix::dot(xi, x.row(j));
        }
    }
    total
}
