//! Retrieval and clustering metrics: Recall@K, CMC, mAP, k-means and NMI.
//!
//! Every ranking breaks distance ties by ascending gallery index, so all
//! metrics are deterministic.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::seed::{derive_seed, Stream};

/// `D[i][j] = ‖a_i − b_j‖₂`.
pub fn pairwise_euclidean(a: &Matrix, b: &Matrix) -> Result<Matrix> {
    if a.cols() != b.cols() {
        return Err(Error::ShapeMismatch(format!(
            "embedding widths differ: {} vs {}",
            a.cols(),
            b.cols()
        )));
    }
    Ok(Matrix::from_fn(a.rows(), b.rows(), |i, j| {
        a.row(i)
            .iter()
            .zip(b.row(j))
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt()
    }))
}

/// Gallery indices of `row` sorted by distance, ties by index.
pub fn argsort_row(row: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    idx
}

/// Per-query ranked gallery with labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedRetrieval {
    order: Vec<Vec<usize>>,
    distances: Vec<Vec<f64>>,
    query_labels: Vec<usize>,
    gallery_labels: Vec<usize>,
    self_exclusion: bool,
}

impl RankedRetrieval {
    /// Query/gallery protocol: every gallery item is ranked for every query.
    pub fn query_gallery(dist: &Matrix, query_labels: &[usize], gallery_labels: &[usize]) -> Result<Self> {
        Self::build(dist, query_labels, gallery_labels, false)
    }

    /// Single-set protocol: queries and gallery are the same items and a
    /// query never retrieves itself.
    pub fn single_set(dist: &Matrix, labels: &[usize]) -> Result<Self> {
        if dist.rows() != dist.cols() {
            return Err(Error::ShapeMismatch("single-set distances must be square".into()));
        }
        Self::build(dist, labels, labels, true)
    }

    fn build(dist: &Matrix, query_labels: &[usize], gallery_labels: &[usize], self_exclusion: bool) -> Result<Self> {
        if dist.rows() != query_labels.len() || dist.cols() != gallery_labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{}x{} distances for {} queries and {} gallery items",
                dist.rows(),
                dist.cols(),
                query_labels.len(),
                gallery_labels.len()
            )));
        }
        let mut order = Vec::with_capacity(dist.rows());
        let mut distances = Vec::with_capacity(dist.rows());
        for q in 0..dist.rows() {
            let row = dist.row(q);
            let ranked: Vec<usize> = argsort_row(row)
                .into_iter()
                .filter(|&g| !(self_exclusion && g == q))
                .collect();
            distances.push(ranked.iter().map(|&g| row[g]).collect());
            order.push(ranked);
        }
        Ok(Self {
            order,
            distances,
            query_labels: query_labels.to_vec(),
            gallery_labels: gallery_labels.to_vec(),
            self_exclusion,
        })
    }

    pub fn order(&self, query: usize) -> &[usize] {
        &self.order[query]
    }

    pub fn distances(&self, query: usize) -> &[f64] {
        &self.distances[query]
    }

    pub fn num_queries(&self) -> usize {
        self.order.len()
    }

    pub fn self_exclusion(&self) -> bool {
        self.self_exclusion
    }

    fn ranked_len(&self) -> usize {
        self.order.first().map_or(0, Vec::len)
    }

    fn is_hit(&self, query: usize, gallery: usize) -> bool {
        self.query_labels[query] == self.gallery_labels[gallery]
    }

    fn hit_rate(&self, k: usize) -> Result<f64> {
        if k == 0 {
            return Err(Error::InvalidParameter {
                name: "k",
                reason: "must be at least 1".into(),
            });
        }
        if k > self.ranked_len() {
            return Err(Error::KTooLarge {
                k,
                available: self.ranked_len(),
            });
        }
        if self.order.is_empty() {
            return Ok(0.0);
        }
        let hits = (0..self.num_queries())
            .filter(|&q| self.order[q][..k].iter().any(|&g| self.is_hit(q, g)))
            .count();
        Ok(hits as f64 / self.num_queries() as f64)
    }
}

/// Fraction of queries with at least one same-class item among the top `k`.
pub fn recall_at_k(ranked: &RankedRetrieval, k: usize) -> Result<f64> {
    ranked.hit_rate(k)
}

/// Rank-`k` identification rate on a query/gallery split.
pub fn cmc(ranked: &RankedRetrieval, k: usize) -> Result<f64> {
    ranked.hit_rate(k)
}

/// Mean over queries of the average precision at every relevant rank.
pub fn mean_average_precision(ranked: &RankedRetrieval) -> Result<f64> {
    if ranked.num_queries() == 0 {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for q in 0..ranked.num_queries() {
        let mut relevant = 0usize;
        let mut precision_sum = 0.0;
        for (rank, &g) in ranked.order[q].iter().enumerate() {
            if ranked.is_hit(q, g) {
                relevant += 1;
                precision_sum += relevant as f64 / (rank + 1) as f64;
            }
        }
        if relevant == 0 {
            return Err(Error::NoRelevantItems(q));
        }
        total += precision_sum / relevant as f64;
    }
    Ok(total / ranked.num_queries() as f64)
}

/// Cluster assignment with dense ids in `[0, count)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    ids: Vec<usize>,
    count: usize,
}

impl Partition {
    /// Relabels arbitrary ids densely in order of first appearance.
    pub fn from_labels(labels: &[usize]) -> Self {
        let mut map = std::collections::HashMap::new();
        let ids = labels
            .iter()
            .map(|l| {
                let next = map.len();
                *map.entry(*l).or_insert(next)
            })
            .collect();
        Self { ids, count: map.len() }
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KMeansConfig {
    pub max_iter: usize,
    pub tol: f64,
    pub restarts: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
            restarts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult {
    pub partition: Partition,
    pub centers: Matrix,
    pub wcss: f64,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest_center(x: &[f64], centers: &Matrix) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for c in 0..centers.rows() {
        let d = sq_dist(x, centers.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn kmeans_plus_plus(x: &Matrix, k: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let n = x.rows();
    let mut chosen = vec![rng.gen_range(0..n)];
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(x.row(i), x.row(chosen[0]))).collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                if target < d {
                    pick = i;
                    break;
                }
                target -= d;
            }
            pick
        } else {
            // every remaining point coincides with a centre
            (0..n).find(|i| !chosen.contains(i)).unwrap_or(0)
        };
        chosen.push(next);
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(x.row(i), x.row(next)));
        }
    }
    x.select_rows(&chosen)
}

fn lloyd(x: &Matrix, mut centers: Matrix, cfg: &KMeansConfig) -> KMeansResult {
    let (n, d) = x.shape();
    let k = centers.rows();
    let mut assign = vec![0usize; n];
    for _ in 0..cfg.max_iter {
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let (c, dd) = nearest_center(x.row(i), &centers);
            assign[i] = c;
            dists[i] = dd;
        }
        let mut sums = Matrix::zeros(k, d);
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assign[i]] += 1;
            for (s, &v) in sums.row_mut(assign[i]).iter_mut().zip(x.row(i)) {
                *s += v;
            }
        }
        let mut taken = vec![false; n];
        for c in 0..k {
            if counts[c] == 0 {
                // re-seed an empty cluster at the worst-fitted point
                let far = (0..n)
                    .filter(|&i| !taken[i])
                    .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)))
                    .unwrap_or(0);
                taken[far] = true;
                dists[far] = 0.0;
                sums.row_mut(c).copy_from_slice(x.row(far));
                counts[c] = 1;
            }
        }
        let mut shift: f64 = 0.0;
        for c in 0..k {
            let inv = 1.0 / counts[c] as f64;
            let new: Vec<f64> = sums.row(c).iter().map(|v| v * inv).collect();
            shift = shift.max(sq_dist(&new, centers.row(c)).sqrt());
            centers.row_mut(c).copy_from_slice(&new);
        }
        if shift <= cfg.tol {
            break;
        }
    }
    let mut wcss = 0.0;
    for i in 0..n {
        let (c, dd) = nearest_center(x.row(i), &centers);
        assign[i] = c;
        wcss += dd;
    }
    KMeansResult {
        partition: Partition {
            ids: assign,
            count: k,
        },
        centers,
        wcss,
    }
}

/// k-means++ seeding and Lloyd iterations, best of `restarts` by WCSS.
pub fn kmeans_with(x: &Matrix, k: usize, seed: u64, cfg: &KMeansConfig) -> Result<KMeansResult> {
    if k == 0 {
        return Err(Error::InvalidParameter {
            name: "k",
            reason: "must be at least 1".into(),
        });
    }
    if k > x.rows() {
        return Err(Error::KTooLarge {
            k,
            available: x.rows(),
        });
    }
    let mut best: Option<KMeansResult> = None;
    for restart in 0..cfg.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, Stream::KMeans, restart as u64));
        let run = lloyd(x, kmeans_plus_plus(x, k, &mut rng), cfg);
        if best.as_ref().is_none_or(|b| run.wcss < b.wcss) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

pub fn kmeans(x: &Matrix, k: usize, seed: u64, max_iter: usize) -> Result<Partition> {
    let cfg = KMeansConfig {
        max_iter,
        ..KMeansConfig::default()
    };
    kmeans_with(x, k, seed, &cfg).map(|r| r.partition)
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Normalised mutual information with geometric-mean normalisation.
///
/// Two single-cluster partitions score 1; a single-cluster partition
/// against anything else scores 0.
pub fn nmi(a: &Partition, b: &Partition) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Ok(1.0);
    }
    let n = a.len() as f64;
    let (ka, kb) = (a.count.max(1), b.count.max(1));
    let mut joint = vec![0usize; ka * kb];
    let mut ca = vec![0usize; ka];
    let mut cb = vec![0usize; kb];
    for (&x, &y) in a.ids.iter().zip(&b.ids) {
        joint[x * kb + y] += 1;
        ca[x] += 1;
        cb[y] += 1;
    }
    let ha = entropy(&ca, n);
    let hb = entropy(&cb, n);
    if ha == 0.0 || hb == 0.0 {
        return Ok(if ha == 0.0 && hb == 0.0 { 1.0 } else { 0.0 });
    }
    let mut mi = 0.0;
    for x in 0..ka {
        for y in 0..kb {
            let c = joint[x * kb + y];
            if c == 0 {
                continue;
            }
            let pxy = c as f64 / n;
            mi += pxy * (pxy / ((ca[x] as f64 / n) * (cb[y] as f64 / n))).ln();
        }
    }
    Ok((mi / (ha * hb).sqrt()).clamp(0.0, 1.0))
}


/// Recall@{1,2,4,8} (capped at the gallery size) and k-means NMI.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RetrievalReport {
    pub recall: Vec<(usize, f64)>,
    pub nmi: f64,
}

impl RetrievalReport {
    pub fn recall_at(&self, k: usize) -> Option<f64> {
        self.recall.iter().find(|(kk, _)| *kk == k).map(|(_, v)| *v)
    }
}

/// Single-set protocol on `embeddings`; clusters with as many centres as classes.
pub fn retrieval_report(embeddings: &Matrix, labels: &[usize], seed: u64) -> Result<RetrievalReport> {
    let dist = pairwise_euclidean(embeddings, embeddings)?;
    let ranked = RankedRetrieval::single_set(&dist, labels)?;
    let available = labels.len().saturating_sub(1);
    let recall = [1usize, 2, 4, 8]
        .into_iter()
        .filter(|&k| k <= available)
        .map(|k| recall_at_k(&ranked, k).map(|r| (k, r)))
        .collect::<Result<Vec<_>>>()?;
    let truth = Partition::from_labels(labels);
    let clusters = kmeans(embeddings, truth.count().max(1), seed, KMeansConfig::default().max_iter)?;
    Ok(RetrievalReport {
        recall,
        nmi: nmi(&clusters, &truth)?,
    })
}
