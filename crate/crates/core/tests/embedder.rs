mod common;

use common::{finite_difference, random_matrix, relative_error, rng};
use grouploss::embednet::{MlpConfig, MlpEmbedder};
use grouploss::Matrix;

fn probe(net: &MlpEmbedder, x: &Matrix, d_emb: &Matrix, d_logits: &Matrix) -> f64 {
    let c = net.forward(x).unwrap();
    let dot = |a: &Matrix, b: &Matrix| a.as_slice().iter().zip(b.as_slice()).map(|(u, v)| u * v).sum::<f64>();
    dot(&c.embeddings, d_emb) + dot(&c.logits, d_logits)
}

#[test]
fn embedder_gradients_match_finite_differences() {
    let mut r = rng(21);
    let cfg = MlpConfig {
        input_dim: 5,
        hidden: vec![7],
        pool: 3,
        embedding_dim: 4,
        num_classes: 3,
    };
    for seed in 0..5 {
        let net = MlpEmbedder::init(cfg.clone(), seed).unwrap();
        let x = random_matrix(&mut r, 6, 5, 1.0);
        let d_emb = random_matrix(&mut r, 6, 4, 1.0);
        let d_logits = random_matrix(&mut r, 6, 3, 1.0);
        let cache = net.forward(&x).unwrap();
        let grads = net.backward(&cache, &d_emb, &d_logits).unwrap();
        let layers: Vec<(&str, Matrix, Matrix)> = vec![
            ("hidden", net.hidden[0].weight.clone(), grads.hidden[0].weight.clone()),
            ("block", net.block.weight.clone(), grads.block.weight.clone()),
            ("classifier", net.classifier.weight.clone(), grads.classifier.weight.clone()),
        ];
        for (name, w, g) in layers {
            let numeric = finite_difference(&w, 1e-6, |probe_w| {
                let mut n2 = net.clone();
                match name {
                    "hidden" => n2.hidden[0].weight = probe_w.clone(),
                    "block" => n2.block.weight = probe_w.clone(),
                    _ => n2.classifier.weight = probe_w.clone(),
                }
                probe(&n2, &x, &d_emb, &d_logits)
            });
            let err = relative_error(&g, &numeric);
            assert!(err < 1e-4, "{name} weights: relative error {err}");
        }
        let b = Matrix::from_vec(1, net.hidden[0].bias.len(), net.hidden[0].bias.clone()).unwrap();
        let numeric = finite_difference(&b, 1e-6, |pb| {
            let mut n2 = net.clone();
            n2.hidden[0].bias = pb.as_slice().to_vec();
            probe(&n2, &x, &d_emb, &d_logits)
        });
        let analytic = Matrix::from_vec(1, b.cols(), grads.hidden[0].bias.clone()).unwrap();
        assert!(relative_error(&analytic, &numeric) < 1e-4);
    }
}
