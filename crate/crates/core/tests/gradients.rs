mod common;

use common::{check_group_loss, finite_difference, random_matrix, relative_error, rng};
use grouploss::simgraph::{similarity, similarity_backward, SimilarityMode};
use grouploss::Matrix;
use rand::Rng;

const FD_STEP: f64 = 1e-5;

/// Scalar probe `Σ dW ⊙ W(f)` whose gradient is the pulled-back cotangent.
fn probe(f: &Matrix, d_w: &Matrix, mode: SimilarityMode) -> f64 {
    let w = similarity(f, mode).unwrap();
    w.weights()
        .as_slice()
        .iter()
        .zip(d_w.as_slice())
        .map(|(a, b)| a * b)
        .sum()
}

#[test]
fn similarity_backward_matches_finite_differences() {
    let mut r = rng(11);
    for mode in [SimilarityMode::Clamped, SimilarityMode::Shifted] {
        for _ in 0..100 {
            let n = r.gen_range(3..=7);
            let d = r.gen_range(3..=6);
            let f = random_matrix(&mut r, n, d, 1.0);
            let d_w = random_matrix(&mut r, n, n, 1.0);
            let analytic = similarity_backward(&f, &d_w, mode).unwrap();
            let numeric = finite_difference(&f, FD_STEP, |x| probe(x, &d_w, mode));
            let err = relative_error(&analytic, &numeric);
            assert!(err < 1e-4, "{mode}: relative error {err}");
        }
    }
}

#[test]
fn similarity_backward_fixed_small_instance() {
    let mut r = rng(5);
    let f = random_matrix(&mut r, 5, 4, 1.0);
    let d_w = random_matrix(&mut r, 5, 5, 1.0);
    let analytic = similarity_backward(&f, &d_w, SimilarityMode::Clamped).unwrap();
    let numeric = finite_difference(&f, FD_STEP, |x| probe(x, &d_w, SimilarityMode::Clamped));
    assert!(relative_error(&analytic, &numeric) < 1e-4);
}

#[test]
fn group_loss_gradients_match_finite_differences() {
    let (ef, ez) = check_group_loss(3, 6, 3, 4, 2, SimilarityMode::Clamped);
    assert!(ef < 1e-4 && ez < 1e-4, "features {ef}, logits {ez}");
}

#[test]
fn shifted_mode_gradients_match_finite_differences() {
    for seed in 0..10 {
        let (ef, ez) = check_group_loss(100 + seed, 7, 3, 5, 3, SimilarityMode::Shifted);
        assert!(ef < 1e-4 && ez < 1e-4, "seed {seed}: features {ef}, logits {ez}");
    }
}
