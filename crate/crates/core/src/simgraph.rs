//! Pairwise Pearson similarity graph over a batch of embeddings, with the
//! two ways of removing negative correlations and the reverse-mode pass
//! through both.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{dot, Matrix};

/// Rows with variance below this are rejected.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// How negative correlations are made non-negative.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityMode {
    /// `max(0, r)` elementwise.
    #[default]
    Clamped,
    /// Subtract the most negative off-diagonal entry from every off-diagonal entry.
    Shifted,
}

impl std::str::FromStr for SimilarityMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "clamped" | "clamp" => Ok(Self::Clamped),
            "shifted" | "shift" => Ok(Self::Shifted),
            other => Err(format!("unknown similarity mode `{other}`")),
        }
    }
}

impl std::fmt::Display for SimilarityMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Clamped => "clamped",
            Self::Shifted => "shifted",
        })
    }
}

/// Non-negative, symmetric, zero-diagonal similarity matrix `W`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    w: Matrix,
    mode: SimilarityMode,
}

impl SimilarityMatrix {
    /// Wraps an arbitrary non-negative square matrix. The diagonal is zeroed.
    pub fn from_weights(mut w: Matrix, mode: SimilarityMode) -> Result<Self> {
        if w.rows() != w.cols() {
            return Err(Error::ShapeMismatch(format!(
                "similarity matrix must be square, got {}x{}",
                w.rows(),
                w.cols()
            )));
        }
        if w.as_slice().iter().any(|&v| v < 0.0 || !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "w",
                reason: "similarities must be finite and non-negative".into(),
            });
        }
        for i in 0..w.rows() {
            w.set(i, i, 0.0);
        }
        Ok(Self { w, mode })
    }

    pub fn weights(&self) -> &Matrix {
        &self.w
    }

    pub fn mode(&self) -> SimilarityMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.w.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.w.rows() == 0
    }

    /// Multiplies every weight by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            w: self.w.scale(c),
            mode: self.mode,
        }
    }
}

/// Per-row centred, unit-norm copies of the feature rows plus the centred norms.
struct Standardized {
    unit: Matrix,
    norms: Vec<f64>,
}

fn standardize(f: &Matrix) -> Result<Standardized> {
    let (n, d) = f.shape();
    let mut unit = Matrix::zeros(n, d);
    let mut norms = Vec::with_capacity(n);
    for i in 0..n {
        let row = f.row(i);
        let mean = row.iter().sum::<f64>() / d as f64;
        let out = unit.row_mut(i);
        for (o, &v) in out.iter_mut().zip(row) {
            *o = v - mean;
        }
        let ss = dot(out, out);
        if !(ss / d as f64 > VARIANCE_FLOOR) {
            return Err(Error::ZeroVarianceRow(i));
        }
        let nrm = ss.sqrt();
        out.iter_mut().for_each(|v| *v /= nrm);
        norms.push(nrm);
    }
    Ok(Standardized { unit, norms })
}

fn check_features(f: &Matrix) -> Result<()> {
    if f.rows() < 2 || f.cols() < 2 {
        return Err(Error::ShapeMismatch(format!(
            "feature matrix needs n >= 2 and d >= 2, got {}x{}",
            f.rows(),
            f.cols()
        )));
    }
    Ok(())
}

/// Raw Pearson correlation between every pair of rows, diagonal set to zero.
pub fn pearson_similarity(f: &Matrix) -> Result<Matrix> {
    check_features(f)?;
    let s = standardize(f)?;
    let n = f.rows();
    let mut r = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v = dot(s.unit.row(i), s.unit.row(j));
            r.set(i, j, v);
            r.set(j, i, v);
        }
    }
    Ok(r)
}

/// `max(0, raw)` elementwise; the diagonal stays zero.
pub fn clamp_negative(raw: &Matrix) -> SimilarityMatrix {
    let mut w = raw.map(|v| v.max(0.0));
    for i in 0..w.rows() {
        w.set(i, i, 0.0);
    }
    SimilarityMatrix {
        w,
        mode: SimilarityMode::Clamped,
    }
}

/// Location of the most negative off-diagonal entry, if any entry is negative.
fn most_negative_off_diagonal(raw: &Matrix) -> Option<(usize, usize, f64)> {
    let n = raw.rows();
    let mut best: Option<(usize, usize, f64)> = None;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let v = raw.get(i, j);
            if v < 0.0 && best.is_none_or(|(_, _, b)| v < b) {
                best = Some((i, j, v));
            }
        }
    }
    best
}

/// Shifts every off-diagonal entry up by `-min(0, min_offdiag(raw))`.
pub fn shift_negative(raw: &Matrix) -> SimilarityMatrix {
    let n = raw.rows();
    let shift = most_negative_off_diagonal(raw).map_or(0.0, |(_, _, v)| -v);
    let w = Matrix::from_fn(n, n, |i, j| {
        if i == j {
            0.0
        } else {
            raw.get(i, j) + shift
        }
    });
    SimilarityMatrix {
        w,
        mode: SimilarityMode::Shifted,
    }
}

/// Forward pass `features -> W` in the requested mode.
pub fn similarity(f: &Matrix, mode: SimilarityMode) -> Result<SimilarityMatrix> {
    let raw = pearson_similarity(f)?;
    Ok(match mode {
        SimilarityMode::Clamped => clamp_negative(&raw),
        SimilarityMode::Shifted => shift_negative(&raw),
    })
}

/// Pulls a cotangent on `W` back to a cotangent on the feature rows.
///
/// Clamped entries (raw <= 0) pass no gradient. In shifted mode the shift
/// itself depends on the minimising entry, which receives minus the total
/// off-diagonal cotangent.
pub fn similarity_backward(f: &Matrix, d_w: &Matrix, mode: SimilarityMode) -> Result<Matrix> {
    check_features(f)?;
    let n = f.rows();
    if d_w.shape() != (n, n) {
        return Err(Error::ShapeMismatch(format!(
            "cotangent is {}x{}, expected {n}x{n}",
            d_w.rows(),
            d_w.cols()
        )));
    }
    let s = standardize(f)?;
    let d = f.cols();

    // Cotangent on the raw correlation matrix, off-diagonal only.
    let mut d_raw = Matrix::zeros(n, n);
    match mode {
        SimilarityMode::Clamped => {
            for i in 0..n {
                for j in 0..n {
                    if i != j && dot(s.unit.row(i), s.unit.row(j)) > 0.0 {
                        d_raw.set(i, j, d_w.get(i, j));
                    }
                }
            }
        }
        SimilarityMode::Shifted => {
            let mut total = 0.0;
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        d_raw.set(i, j, d_w.get(i, j));
                        total += d_w.get(i, j);
                    }
                }
            }
            let raw = pearson_similarity(f)?;
            if let Some((i, j, _)) = most_negative_off_diagonal(&raw) {
                d_raw.add_at(i, j, -total);
            }
        }
    }

    // r_ij = <u_i, u_j>, u_i = c_i / |c_i|, c_i = f_i - mean(f_i).
    let mut d_f = Matrix::zeros(n, d);
    let mut d_u = vec![0.0; d];
    for i in 0..n {
        d_u.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..n {
            if i == j {
                continue;
            }
            let g = d_raw.get(i, j) + d_raw.get(j, i);
            if g == 0.0 {
                continue;
            }
            for (acc, &u) in d_u.iter_mut().zip(s.unit.row(j)) {
                *acc += g * u;
            }
        }
        let u_i = s.unit.row(i);
        let radial = dot(u_i, &d_u);
        let inv_norm = 1.0 / s.norms[i];
        let out = d_f.row_mut(i);
        for ((o, &g), &u) in out.iter_mut().zip(&d_u).zip(u_i) {
            *o = (g - radial * u) * inv_norm;
        }
        let mean = out.iter().sum::<f64>() / d as f64;
        out.iter_mut().for_each(|v| *v -= mean);
    }
    Ok(d_f)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_rows(a: [f64; 3], b: [f64; 3]) -> Matrix {
        Matrix::from_rows(&[a, b]).unwrap()
    }

    #[test]
    fn pearson_hand_values() {
        let r = pearson_similarity(&two_rows([1., 2., 3.], [2., 4., 6.])).unwrap();
        assert!((r.get(0, 1) - 1.0).abs() < 1e-15);
        let r = pearson_similarity(&two_rows([1., 2., 3.], [3., 2., 1.])).unwrap();
        assert!((r.get(0, 1) + 1.0).abs() < 1e-15);
        let r = pearson_similarity(&two_rows([1., 2., 3.], [1., 3., 2.])).unwrap();
        assert!((r.get(0, 1) - 0.5).abs() < 1e-15);
        assert_eq!(r.get(0, 0), 0.0);
        assert_eq!(r.get(0, 1), r.get(1, 0));
    }

    #[test]
    fn constant_row_is_rejected() {
        let err = pearson_similarity(&two_rows([1., 2., 3.], [4., 4., 4.])).unwrap_err();
        assert_eq!(err, Error::ZeroVarianceRow(1));
    }

    #[test]
    fn clamp_examples() {
        let raw = Matrix::from_rows(&[[0.0, -0.7, 0.3], [-0.7, 0.0, -0.2], [0.3, -0.2, 0.0]]).unwrap();
        let w = clamp_negative(&raw);
        assert_eq!(w.weights().get(0, 1), 0.0);
        assert_eq!(w.weights().get(0, 2), 0.3);
        let all_neg = Matrix::from_rows(&[[0.0, -0.5], [-0.5, 0.0]]).unwrap();
        assert!(clamp_negative(&all_neg).weights().as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn shift_examples() {
        let raw = Matrix::from_rows(&[[0.0, -0.4, 0.1], [-0.4, 0.0, 0.2], [0.1, 0.2, 0.0]]).unwrap();
        let w = shift_negative(&raw);
        assert!((w.weights().get(0, 2) - 0.5).abs() < 1e-15);
        assert_eq!(w.weights().get(0, 1), 0.0);
        assert_eq!(w.weights().get(1, 1), 0.0);

        let pos = Matrix::from_rows(&[[0.0, 0.4], [0.4, 0.0]]).unwrap();
        assert_eq!(shift_negative(&pos).weights(), &pos);

        let neg = Matrix::from_rows(&[[0.0, -1.0], [-1.0, 0.0]]).unwrap();
        assert_eq!(shift_negative(&neg).weights(), &Matrix::zeros(2, 2));
    }

    #[test]
    fn zero_cotangent_gives_zero_gradient() {
        let f = Matrix::from_rows(&[[1., 2., 0.5], [0.3, -1., 2.], [1., 1., 3.]]).unwrap();
        let g = similarity_backward(&f, &Matrix::zeros(3, 3), SimilarityMode::Clamped).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn clamped_entries_pass_no_gradient() {
        // rows 0 and 1 are perfectly anti-correlated, row 2 is uncorrelated-ish
        let f = Matrix::from_rows(&[[1., 2., 3.], [3., 2., 1.], [1., 3., 2.]]).unwrap();
        let mut d_w = Matrix::zeros(3, 3);
        d_w.set(0, 1, 1.0);
        d_w.set(1, 0, -2.0);
        let g = similarity_backward(&f, &d_w, SimilarityMode::Clamped).unwrap();
        assert!(g.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_tiny_batches() {
        let f = Matrix::from_rows(&[[1., 2., 3.]]).unwrap();
        assert!(matches!(pearson_similarity(&f), Err(Error::ShapeMismatch(_))));
    }
}
