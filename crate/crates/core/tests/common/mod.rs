//! Independent oracles shared by the integration and acceptance suites.
//! Nothing here calls into the code paths it is used to check.

#![allow(dead_code)]

use grouploss::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-scale..scale))
}

/// Central finite differences of a scalar function of a matrix.
pub fn finite_difference(x: &Matrix, step: f64, mut f: impl FnMut(&Matrix) -> f64) -> Matrix {
    let mut probe = x.clone();
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    for i in 0..x.rows() {
        for j in 0..x.cols() {
            let orig = x.get(i, j);
            probe.set(i, j, orig + step);
            let up = f(&probe);
            probe.set(i, j, orig - step);
            let down = f(&probe);
            probe.set(i, j, orig);
            grad.set(i, j, (up - down) / (2.0 * step));
        }
    }
    grad
}

/// `‖a − b‖ / max(‖a‖, ‖b‖, floor)`: relative error of two gradient tensors.
pub fn relative_error(a: &Matrix, b: &Matrix) -> f64 {
    let diff: f64 = a
        .as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    let na = a.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.as_slice().iter().map(|v| v * v).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-8)
}

/// Pearson correlation straight from the textbook covariance formula.
pub fn pearson_textbook(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum::<f64>() / n;
    let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum::<f64>() / n;
    let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum::<f64>() / n;
    cov / (va * vb).sqrt()
}

/// Position of `g` in the ranking of `row`, counting strictly closer items
/// and equal-distance items with a smaller index; `skip` is left out.
fn rank_by_counting(row: &[f64], g: usize, skip: Option<usize>) -> usize {
    (0..row.len())
        .filter(|&o| Some(o) != skip && o != g)
        .filter(|&o| row[o] < row[g] || (row[o] == row[g] && o < g))
        .count()
}

/// Recall@k by counting, for every relevant item, how many items beat it.
pub fn brute_recall(dist: &[Vec<f64>], ql: &[usize], gl: &[usize], k: usize, single_set: bool) -> f64 {
    let hits = (0..dist.len())
        .filter(|&q| {
            let skip = single_set.then_some(q);
            (0..gl.len())
                .filter(|&g| Some(g) != skip && gl[g] == ql[q])
                .any(|g| rank_by_counting(&dist[q], g, skip) < k)
        })
        .count();
    hits as f64 / dist.len() as f64
}

/// Mean average precision; `None` when some query has no relevant item.
pub fn brute_map(dist: &[Vec<f64>], ql: &[usize], gl: &[usize], single_set: bool) -> Option<f64> {
    let mut total = 0.0;
    for q in 0..dist.len() {
        let skip = single_set.then_some(q);
        let relevant: Vec<usize> = (0..gl.len()).filter(|&g| Some(g) != skip && gl[g] == ql[q]).collect();
        if relevant.is_empty() {
            return None;
        }
        let ranks: Vec<usize> = relevant.iter().map(|&g| rank_by_counting(&dist[q], g, skip)).collect();
        let ap: f64 = ranks
            .iter()
            .map(|&r| ranks.iter().filter(|&&o| o <= r).count() as f64 / (r + 1) as f64)
            .sum::<f64>()
            / relevant.len() as f64;
        total += ap;
    }
    Some(total / dist.len() as f64)
}

/// Re-ranking written directly from the method description with boolean
/// membership vectors: k-reciprocal sets on the joint matrix (owner excluded),
/// k1-NN fallback for empty query sets, half-size expansion with a 2/3
/// overlap test, truncation to the k2 closest, Jaccard blend with `lambda`
/// on the original distance.
pub fn brute_rerank(qg: &[Vec<f64>], joint: &[Vec<f64>], k1: usize, k2: usize, lambda: f64) -> Vec<Vec<f64>> {
    let q = qg.len();
    let n = joint.len();
    let nn = |i: usize, k: usize| -> Vec<bool> {
        let mut member = vec![false; n];
        for j in 0..n {
            if j != i && rank_by_counting(&joint[i], j, Some(i)) < k {
                member[j] = true;
            }
        }
        member
    };
    let reciprocal = |k: usize| -> Vec<Vec<bool>> {
        let all: Vec<Vec<bool>> = (0..n).map(|i| nn(i, k)).collect();
        (0..n)
            .map(|i| (0..n).map(|j| all[i][j] && all[j][i]).collect())
            .collect()
    };
    let mut r = reciprocal(k1);
    for i in 0..q {
        if !r[i].iter().any(|&b| b) {
            r[i] = nn(i, k1);
        }
    }
    let half = reciprocal(k1 / 2);
    let mut expanded = Vec::with_capacity(n);
    for i in 0..n {
        let mut e = r[i].clone();
        for j in 0..n {
            if !r[i][j] {
                continue;
            }
            let size = half[j].iter().filter(|&&b| b).count() as f64;
            let overlap = (0..n).filter(|&m| half[j][m] && r[i][m]).count() as f64;
            if overlap >= size * 2.0 / 3.0 - 1e-9 {
                for m in 0..n {
                    e[m] |= half[j][m];
                }
            }
        }
        e[i] = false;
        let members: Vec<usize> = (0..n).filter(|&m| e[m]).collect();
        let mut kept = vec![false; n];
        for &m in &members {
            let closer = members
                .iter()
                .filter(|&&o| joint[i][o] < joint[i][m] || (joint[i][o] == joint[i][m] && o < m))
                .count();
            if closer < k2 {
                kept[m] = true;
            }
        }
        expanded.push(kept);
    }
    (0..q)
        .map(|a| {
            (0..qg[0].len())
                .map(|b| {
                    let (x, y) = (&expanded[a], &expanded[q + b]);
                    let inter = (0..n).filter(|&m| x[m] && y[m]).count() as f64;
                    let union = (0..n).filter(|&m| x[m] || y[m]).count() as f64;
                    let dj = if union == 0.0 { 1.0 } else { 1.0 - inter / union };
                    lambda * qg[a][b] + (1.0 - lambda) * dj
                })
                .collect()
        })
        .collect()
}

/// Random points in the plane plus their query/gallery and joint distances.
/// Coordinates are drawn from a small grid so that tied distances occur.
pub fn random_rerank_instance(rng: &mut ChaCha8Rng, q: usize, g: usize) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let pts: Vec<(f64, f64)> = (0..q + g)
        .map(|_| (rng.gen_range(0..6) as f64, rng.gen_range(0..6) as f64))
        .collect();
    let d = |a: usize, b: usize| ((pts[a].0 - pts[b].0).powi(2) + (pts[a].1 - pts[b].1).powi(2)).sqrt();
    let joint: Vec<Vec<f64>> = (0..q + g).map(|a| (0..q + g).map(|b| d(a, b)).collect()).collect();
    let qg: Vec<Vec<f64>> = (0..q).map(|a| (0..g).map(|b| d(a, q + b)).collect()).collect();
    (qg, joint)
}

/// A random refinement problem: clamped Pearson weights of random features,
/// temperature-softmax priors, roughly 30% anchors (at least one free row).
/// Instances whose refinement would hit an empty support are redrawn.
pub fn random_refine_instance(
    rng: &mut ChaCha8Rng,
    max_n: usize,
    max_m: usize,
) -> (grouploss::simgraph::SimilarityMatrix, grouploss::refine::AssignmentMatrix) {
    use grouploss::refine::{init_assignments, refine};
    use grouploss::simgraph::{similarity, SimilarityMode};
    loop {
        let n = rng.gen_range(2..=max_n);
        let m = rng.gen_range(2..=max_m);
        let d = rng.gen_range(2..=8);
        let f = random_matrix(rng, n, d, 1.0);
        let Ok(w) = similarity(&f, SimilarityMode::Clamped) else { continue };
        let logits = random_matrix(rng, n, m, 3.0);
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..m)).collect();
        let mut anchors: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.3)).collect();
        let free = rng.gen_range(0..n);
        anchors[free] = false;
        let temp = rng.gen_range(0.2..2.0);
        let x = init_assignments(&logits, temp, &anchors, &labels).unwrap();
        if refine(&w, x.clone(), 1).is_ok() {
            return (w, x);
        }
    }
}

fn random_batch(r: &mut ChaCha8Rng, n: usize, m: usize) -> (Vec<usize>, Vec<bool>) {
    let labels: Vec<usize> = (0..n).map(|i| if i < m { i } else { r.gen_range(0..m) }).collect();
    let mut anchors: Vec<bool> = (0..n).map(|_| r.gen_bool(0.25)).collect();
    anchors[0] = false;
    (labels, anchors)
}

/// Relative errors of `d_features` and `d_logits` against central finite
/// differences (step 1e-5) on a random batch with a defined loss.
pub fn check_group_loss(seed: u64, n: usize, m: usize, d: usize, steps: usize, mode: grouploss::simgraph::SimilarityMode) -> (f64, f64) {
    let mut r = rng(seed);
    // redraw batches whose loss is undefined (a free row with empty support)
    let (features, logits, labels, anchors, cfg, rep) = loop {
        let features = random_matrix(&mut r, n, d, 1.0);
        let logits = random_matrix(&mut r, n, m, 2.0);
        let (labels, anchors) = random_batch(&mut r, n, m);
        let cfg = grouploss::loss::GroupLossConfig {
            steps,
            temperature: r.gen_range(0.5..2.0),
            mode,
            detach_w: false,
        };
        if let Ok(rep) = grouploss::loss::group_loss(&features, &logits, &labels, &anchors, &cfg) {
            break (features, logits, labels, anchors, cfg, rep);
        }
    };
    let fd_f = finite_difference(&features, 1e-5, |f| {
        grouploss::loss::group_loss(f, &logits, &labels, &anchors, &cfg).unwrap().loss
    });
    let fd_z = finite_difference(&logits, 1e-5, |z| {
        grouploss::loss::group_loss(&features, z, &labels, &anchors, &cfg).unwrap().loss
    });
    (relative_error(&rep.d_features, &fd_f), relative_error(&rep.d_logits, &fd_z))
}

