//! k-reciprocal re-ranking of query/gallery distances.
//!
//! Items are indexed jointly: queries `0..q`, gallery `q..q+g`. Neighbour
//! sets never contain their owner.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::metrics::pairwise_euclidean;

/// Query×gallery distances together with the joint (q+g)×(q+g) matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    query_gallery: Matrix,
    joint: Matrix,
}

impl DistanceMatrix {
    pub fn new(query_gallery: Matrix, joint: Matrix) -> Result<Self> {
        let (q, g) = query_gallery.shape();
        if joint.shape() != (q + g, q + g) {
            return Err(Error::ShapeMismatch(format!(
                "joint matrix is {}x{}, expected {n}x{n}",
                joint.rows(),
                joint.cols(),
                n = q + g
            )));
        }
        if query_gallery.as_slice().iter().chain(joint.as_slice()).any(|&v| !(v >= 0.0) || !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "distances",
                reason: "must be finite and non-negative".into(),
            });
        }
        for i in 0..q + g {
            if joint.get(i, i) != 0.0 {
                return Err(Error::InvalidParameter {
                    name: "distances",
                    reason: format!("joint diagonal entry {i} is not zero"),
                });
            }
            for j in 0..i {
                if joint.get(i, j) != joint.get(j, i) {
                    return Err(Error::InvalidParameter {
                        name: "distances",
                        reason: format!("joint matrix not symmetric at ({i},{j})"),
                    });
                }
            }
        }
        Ok(Self { query_gallery, joint })
    }

    /// Euclidean distances; the joint block is symmetrised exactly.
    pub fn from_features(queries: &Matrix, gallery: &Matrix) -> Result<Self> {
        let qg = pairwise_euclidean(queries, gallery)?;
        let mut rows: Vec<Vec<f64>> = queries.iter_rows().map(<[f64]>::to_vec).collect();
        rows.extend(gallery.iter_rows().map(<[f64]>::to_vec));
        let all = Matrix::from_rows(&rows)?;
        let mut joint = pairwise_euclidean(&all, &all)?;
        let n = joint.rows();
        for i in 0..n {
            joint.set(i, i, 0.0);
            for j in 0..i {
                let v = joint.get(i, j);
                joint.set(j, i, v);
            }
        }
        Self::new(qg, joint)
    }

    pub fn query_gallery(&self) -> &Matrix {
        &self.query_gallery
    }

    pub fn joint(&self) -> &Matrix {
        &self.joint
    }

    pub fn num_queries(&self) -> usize {
        self.query_gallery.rows()
    }

    pub fn num_gallery(&self) -> usize {
        self.query_gallery.cols()
    }
}

/// Which term `lambda` multiplies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LambdaWeights {
    #[default]
    Original,
    Jaccard,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RerankConfig {
    pub k1: usize,
    pub k2: usize,
    pub lambda: f64,
    pub lambda_weights: LambdaWeights,
}

impl RerankConfig {
    pub fn cub_like() -> Self {
        Self {
            k1: 50,
            k2: 20,
            lambda: 0.85,
            lambda_weights: LambdaWeights::Original,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::InvalidParameter {
                name: "lambda",
                reason: "must be in [0,1]".into(),
            });
        }
        if self.k1 == 0 || self.k2 == 0 {
            return Err(Error::InvalidParameter {
                name: "k",
                reason: "k1 and k2 must be at least 1".into(),
            });
        }
        Ok(())
    }
}

impl Default for RerankConfig {
    fn default() -> Self {
        Self::cub_like()
    }
}

/// The `k` smallest entries of `row`, ties by ascending index.
pub fn knn(row: &[f64], k: usize) -> Result<Vec<usize>> {
    if k > row.len() {
        return Err(Error::KTooLarge { k, available: row.len() });
    }
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

/// `k` nearest items to `i` in the joint matrix, excluding `i`.
fn neighbours(joint: &Matrix, i: usize, k: usize) -> Result<Vec<usize>> {
    let n = joint.rows();
    if k > n.saturating_sub(1) {
        return Err(Error::KTooLarge {
            k,
            available: n.saturating_sub(1),
        });
    }
    let row = joint.row(i);
    let mut idx: Vec<usize> = (0..n).filter(|&j| j != i).collect();
    idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    idx.truncate(k);
    Ok(idx)
}

/// `R(i,k) = { j ∈ NN(i,k) : i ∈ NN(j,k) }` for every item.
pub fn k_reciprocal_sets(joint: &Matrix, k: usize) -> Result<Vec<BTreeSet<usize>>> {
    let n = joint.rows();
    let nn: Vec<BTreeSet<usize>> = (0..n)
        .map(|i| neighbours(joint, i, k).map(|v| v.into_iter().collect()))
        .collect::<Result<_>>()?;
    Ok((0..n)
        .map(|i| nn[i].iter().copied().filter(|&j| nn[j].contains(&i)).collect())
        .collect())
}

/// Grows each set by the `⌊k1/2⌋`-reciprocal sets of its members that overlap
/// it by at least 2/3, then keeps the `k2` members closest to the owner.
pub fn expand_sets(sets: &[BTreeSet<usize>], joint: &Matrix, k1: usize, k2: usize) -> Result<Vec<BTreeSet<usize>>> {
    if k2 == 0 {
        return Err(Error::InvalidParameter {
            name: "k2",
            reason: "must be at least 1".into(),
        });
    }
    let half = k_reciprocal_sets(joint, k1 / 2)?;
    Ok(sets
        .iter()
        .enumerate()
        .map(|(i, set)| {
            let mut out = set.clone();
            for &j in set {
                let cand = &half[j];
                let overlap = cand.intersection(set).count();
                if 3 * overlap >= 2 * cand.len() {
                    out.extend(cand.iter().copied());
                }
            }
            out.remove(&i);
            truncate_closest(out, joint.row(i), k2)
        })
        .collect())
}

fn truncate_closest(set: BTreeSet<usize>, row: &[f64], k: usize) -> BTreeSet<usize> {
    if set.len() <= k {
        return set;
    }
    let mut v: Vec<usize> = set.into_iter().collect();
    v.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    v.into_iter().take(k).collect()
}

/// `1 − |A∩B|/|A∪B|`, and 1 when both are empty.
pub fn jaccard_distance(a: &BTreeSet<usize>, b: &BTreeSet<usize>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        1.0 - inter as f64 / union as f64
    }
}

/// Re-ranked q×g distances with `lambda` on the original distance.
pub fn rerank(dist: &DistanceMatrix, k1: usize, k2: usize, lambda: f64) -> Result<Matrix> {
    rerank_with(
        dist,
        &RerankConfig {
            k1,
            k2,
            lambda,
            lambda_weights: LambdaWeights::Original,
        },
    )
}

pub fn rerank_with(dist: &DistanceMatrix, cfg: &RerankConfig) -> Result<Matrix> {
    cfg.validate()?;
    let (q, g) = dist.query_gallery.shape();
    let joint = &dist.joint;
    let mut sets = k_reciprocal_sets(joint, cfg.k1)?;
    for (i, set) in sets.iter_mut().enumerate().take(q) {
        if set.is_empty() {
            *set = neighbours(joint, i, cfg.k1)?.into_iter().collect();
        }
    }
    let expanded = expand_sets(&sets, joint, cfg.k1, cfg.k2)?;
    let (wd, wj) = match cfg.lambda_weights {
        LambdaWeights::Original => (cfg.lambda, 1.0 - cfg.lambda),
        LambdaWeights::Jaccard => (1.0 - cfg.lambda, cfg.lambda),
    };
    Ok(Matrix::from_fn(q, g, |a, b| {
        wd * dist.query_gallery.get(a, b) + wj * jaccard_distance(&expanded[a], &expanded[q + b])
    }))
}
