//! One line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::time::Instant;

use common::{brute_map, brute_recall, brute_rerank, check_group_loss, random_refine_instance, random_rerank_instance, rng};
use grouploss::cli::commands::eval_single;
use grouploss::cli::io::LabeledFeatures;
use grouploss::cli::RunConfig;
use grouploss::embednet::{median, refinement_sweep, run_experiment, CenterLayout, ExperimentSpec, MlpConfig, MlpEmbedder};
use grouploss::inference::{beta_normalize, inference_pipeline, InferenceConfig};
use grouploss::metrics::{argsort_row, cmc, mean_average_precision, nmi, pairwise_euclidean, recall_at_k, Partition, RankedRetrieval};
use grouploss::refine::{consistency, refine, refine_step, support};
use grouploss::rerank::{rerank, DistanceMatrix};
use grouploss::simgraph::SimilarityMode;
use grouploss::Matrix;
use rand::Rng;

const MASTER_SEED: u64 = 0;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn monotone_consistency() -> Outcome {
    let start = Instant::now();
    let mut r = rng(MASTER_SEED ^ 1);
    let mut worst = f64::INFINITY;
    let mut steps_checked = 0usize;
    let mut skipped = 0usize;
    for _ in 0..1000 {
        let (w, x0) = random_refine_instance(&mut r, 20, 8);
        let steps = r.gen_range(1..=50);
        let Ok(trace) = refine(&w, x0, steps) else {
            skipped += 1;
            continue;
        };
        let f = trace.consistency_trajectory();
        for t in 1..f.len() {
            worst = worst.min(f[t] - f[t - 1]);
            steps_checked += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst >= -1e-10 && secs < 30.0 && skipped == 0,
        format!("1000 instances, {steps_checked} steps, min ΔF = {worst:.3e}, {skipped} degenerate, {secs:.1}s"),
    )
}

fn homotopy() -> Outcome {
    let mut r = rng(MASTER_SEED ^ 2);
    let mut worst = f64::INFINITY;
    for _ in 0..200 {
        let (w, x0) = random_refine_instance(&mut r, 20, 8);
        let next = refine_step(&x0, &support(&w, &x0).unwrap()).unwrap();
        let base = consistency(&w, x0.values());
        for eta in [0.1, 0.5, 0.9] {
            let mix = Matrix::from_fn(x0.rows(), x0.classes(), |i, j| {
                eta * next.values().get(i, j) + (1.0 - eta) * x0.values().get(i, j)
            });
            worst = worst.min(consistency(&w, &mix) - base);
        }
    }
    outcome(worst >= -1e-10, format!("200 instances x 3 eta, min F(mix) - F(X) = {worst:.3e}"))
}

fn stochastic_and_anchors() -> Outcome {
    let mut r = rng(MASTER_SEED ^ 1);
    let mut worst_sum = 0.0f64;
    let mut negative = 0usize;
    let mut anchor_changes = 0usize;
    for _ in 0..1000 {
        let (w, x0) = random_refine_instance(&mut r, 20, 8);
        let steps = r.gen_range(1..=50);
        let Ok(trace) = refine(&w, x0.clone(), steps) else { continue };
        for x in trace.iterates() {
            for i in 0..x.rows() {
                let row = x.values().row(i);
                worst_sum = worst_sum.max((row.iter().sum::<f64>() - 1.0).abs());
                negative += row.iter().filter(|&&v| v < 0.0).count();
                if x0.anchors()[i] && row.iter().zip(x0.values().row(i)).any(|(a, b)| a.to_bits() != b.to_bits()) {
                    anchor_changes += 1;
                }
            }
        }
    }
    outcome(
        worst_sum <= 1e-9 && negative == 0 && anchor_changes == 0,
        format!("max |row sum - 1| = {worst_sum:.3e}, {negative} negative entries, {anchor_changes} anchor rows changed"),
    )
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut r = rng(MASTER_SEED ^ 4);
    let (mut worst_f, mut worst_z) = (0.0f64, 0.0f64);
    for i in 0..50 {
        let n = r.gen_range(4..=12);
        let m = r.gen_range(2..=5);
        let d = r.gen_range(3..=8);
        let steps = r.gen_range(1..=4);
        let mode = if i % 2 == 0 { SimilarityMode::Clamped } else { SimilarityMode::Shifted };
        let (ef, ez) = check_group_loss(r.gen(), n, m, d, steps, mode);
        worst_f = worst_f.max(ef);
        worst_z = worst_z.max(ez);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst_f < 1e-4 && worst_z < 1e-4 && secs < 120.0,
        format!("50 configs, max rel. err d_features {worst_f:.2e}, d_logits {worst_z:.2e}, {secs:.1}s"),
    )
}

fn refinement_benefit() -> Outcome {
    let spec = ExperimentSpec::default();
    let rows = refinement_sweep(&spec, &[0, 1, 2, 3, 4, 5], MASTER_SEED, 5).unwrap();
    let med: Vec<f64> = rows.iter().map(|r| r.median_recall_at_1).collect();
    let peak = med.iter().copied().fold(f64::MIN, f64::max);
    let peak_in_middle = [2, 3, 4].iter().any(|&t| med[t] == peak);
    let gain = med[3] - med[0];
    let table: Vec<String> = med.iter().enumerate().map(|(t, m)| format!("T{t}={m:.3}")).collect();
    outcome(
        gain >= 0.02 && peak_in_middle && med[5] <= peak,
        format!("median Recall@1 {} (T3 - T0 = {:+.1}pp)", table.join(" "), 100.0 * gain),
    )
}

fn trainability() -> Outcome {
    let start = Instant::now();
    let spec = ExperimentSpec {
        spread: 0.35,
        ..ExperimentSpec::default()
    };
    let run = run_experiment(&spec, ExperimentSpec::run_seed(MASTER_SEED, 0)).unwrap();
    let reached = run.outcome.log.iter().find_map(|e| {
        let t = e.test.as_ref()?;
        let r1 = t.recall_at(1)?;
        (r1 >= 0.95 && t.nmi >= 0.90).then_some((e.epoch + 1, r1, t.nmi))
    });
    let secs = start.elapsed().as_secs_f64();
    let detail = match reached {
        Some((epoch, r1, n)) => format!("reached at epoch {epoch} (Recall@1 {r1:.3}, NMI {n:.3}), {secs:.1}s"),
        None => format!("final Recall@1 {:.3}, NMI {:.3}, {secs:.1}s", run.recall_at_1, run.nmi),
    };
    outcome(reached.is_some() && spec.train.epochs <= 20 && secs < 300.0, detail)
}

fn clamping_vs_shifting() -> Outcome {
    let medians: Vec<f64> = [SimilarityMode::Clamped, SimilarityMode::Shifted]
        .into_iter()
        .map(|mode| {
            let mut spec = ExperimentSpec {
                layout: CenterLayout::Antipodal,
                ..ExperimentSpec::default()
            };
            spec.train.loss.mode = mode;
            let r: Vec<f64> = (0..5)
                .map(|i| run_experiment(&spec, ExperimentSpec::run_seed(MASTER_SEED, i)).unwrap().recall_at_1)
                .collect();
            median(&r).unwrap()
        })
        .collect();
    outcome(
        medians[0] >= medians[1],
        format!("antipodal centres, median Recall@1 clamped {:.3} vs shifted {:.3}", medians[0], medians[1]),
    )
}

fn rerank_oracle() -> Outcome {
    let mut r = rng(MASTER_SEED ^ 8);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let q = r.gen_range(1..=15);
        let g = r.gen_range(1..=15);
        let k1 = r.gen_range(1..q + g);
        let k2 = r.gen_range(1..=q + g);
        let lambda = r.gen_range(0.0..=1.0);
        let (qg, joint) = random_rerank_instance(&mut r, q, g);
        let expected = brute_rerank(&qg, &joint, k1, k2, lambda);
        let dist = DistanceMatrix::new(Matrix::from_rows(&qg).unwrap(), Matrix::from_rows(&joint).unwrap()).unwrap();
        let got = rerank(&dist, k1, k2, lambda).unwrap();
        for a in 0..q {
            for b in 0..g {
                worst = worst.max((got.get(a, b) - expected[a][b]).abs());
            }
        }
    }
    outcome(worst <= 1e-12, format!("100 instances, max |d* - oracle| = {worst:.3e}"))
}

fn nmi_hand_cases() -> Vec<(Vec<usize>, Vec<usize>, f64)> {
    let ln = f64::ln;
    let h = |ps: &[f64]| -ps.iter().map(|p| p * p.ln()).sum::<f64>();
    let mi5 = 0.5 * ln(4.0 / 3.0) + 0.25 * ln(2.0 / 3.0) + 0.25 * ln(2.0);
    let hb5 = h(&[0.75, 0.25]);
    let hb8 = h(&[1.0 / 3.0, 2.0 / 3.0]);
    vec![
        (vec![0, 0, 1, 1], vec![0, 0, 1, 1], 1.0),
        (vec![0, 0, 1, 1], vec![0, 1, 0, 1], 0.0),
        (vec![0, 0, 0, 0], vec![0, 0, 0, 0], 1.0),
        (vec![0, 0], vec![0, 1], 0.0),
        (vec![0, 0, 1, 1], vec![0, 0, 0, 1], mi5 / (ln(2.0) * hb5).sqrt()),
        (vec![2, 2, 0, 1], vec![5, 5, 3, 4], 1.0),
        (vec![0, 1, 2], vec![0, 0, 0], 0.0),
        (vec![0, 0, 1, 1, 2, 2], vec![0, 0, 1, 1, 1, 1], (hb8 / ln(3.0)).sqrt()),
        (vec![0, 0, 0, 1, 1, 1], vec![0, 0, 1, 1, 2, 2], (2.0 / 3.0) * ln(2.0) / (ln(2.0) * ln(3.0)).sqrt()),
        (vec![0, 1], vec![1, 0], 1.0),
    ]
}

fn metric_oracles() -> Outcome {
    let mut r = rng(MASTER_SEED ^ 9);
    let mut mismatches = 0usize;
    let mut checked = 0usize;
    for _ in 0..500 {
        let single = r.gen_bool(0.5);
        let nq = r.gen_range(2..=12);
        let ng = if single { nq } else { r.gen_range(1..=12) };
        let classes = r.gen_range(1..=4);
        let ql: Vec<usize> = (0..nq).map(|_| r.gen_range(0..classes)).collect();
        let gl: Vec<usize> = if single { ql.clone() } else { (0..ng).map(|_| r.gen_range(0..classes)).collect() };
        // small integer distances so that ties are common
        let mut d: Vec<Vec<f64>> = (0..nq).map(|_| (0..ng).map(|_| f64::from(r.gen_range(0..5u8))).collect()).collect();
        if single {
            for i in 0..nq {
                d[i][i] = 0.0;
                for j in 0..i {
                    d[i][j] = d[j][i];
                }
            }
        }
        let m = Matrix::from_rows(&d).unwrap();
        let ranked = if single {
            RankedRetrieval::single_set(&m, &ql).unwrap()
        } else {
            RankedRetrieval::query_gallery(&m, &ql, &gl).unwrap()
        };
        let available = if single { ng - 1 } else { ng };
        for k in 1..=available {
            let expected = brute_recall(&d, &ql, &gl, k, single);
            let got_r = recall_at_k(&ranked, k).unwrap();
            let got_c = cmc(&ranked, k).unwrap();
            checked += 2;
            mismatches += usize::from((got_r - expected).abs() > 1e-12) + usize::from((got_c - expected).abs() > 1e-12);
        }
        checked += 1;
        match (brute_map(&d, &ql, &gl, single), mean_average_precision(&ranked)) {
            (Some(e), Ok(g)) if (e - g).abs() <= 1e-12 => {}
            (None, Err(_)) => {}
            _ => mismatches += 1,
        }
    }
    let mut nmi_worst = 0.0f64;
    for (a, b, expected) in nmi_hand_cases() {
        let got = nmi(&Partition::from_labels(&a), &Partition::from_labels(&b)).unwrap();
        nmi_worst = nmi_worst.max((got - expected).abs());
    }
    outcome(
        mismatches == 0 && nmi_worst <= 1e-12,
        format!("{checked} recall/cmc/mAP values, {mismatches} mismatches; 10 NMI cases, max error {nmi_worst:.1e}"),
    )
}

fn rankings(m: &Matrix) -> Vec<Vec<usize>> {
    let d = pairwise_euclidean(m, m).unwrap();
    (0..d.rows()).map(|i| argsort_row(d.row(i))).collect()
}

fn inference_neutrality_and_effect() -> Outcome {
    let mut r = rng(MASTER_SEED ^ 10);
    let cfg = MlpConfig {
        input_dim: 8,
        hidden: vec![16],
        pool: 4,
        embedding_dim: 6,
        num_classes: 3,
    };
    let mut net = MlpEmbedder::init(cfg, 3).unwrap();
    // push the block pre-activations to both signs so the final activation matters
    net.block.bias.iter_mut().for_each(|b| *b = r.gen_range(-0.3..0.3));
    let inputs = common::random_matrix(&mut r, 30, 8, 1.0);

    let neutral = InferenceConfig::default();
    let plain = net.embed_train(&inputs).unwrap();
    let plain = Matrix::from_rows(
        &plain
            .iter_rows()
            .map(|v| beta_normalize(v, 0.0).unwrap())
            .collect::<Vec<_>>(),
    )
    .unwrap();
    let base = rankings(&inference_pipeline(&net, &inputs, &neutral).unwrap());
    let neutral_ok = base == rankings(&plain);

    let variants = [
        ("mixed", InferenceConfig { alpha: 1.0, ..neutral }),
        ("beta", InferenceConfig { beta: 1.0, ..neutral }),
        ("leaky", InferenceConfig { leaky_slope: Some(0.5), ..neutral }),
        ("flip", InferenceConfig { use_flip: true, ..neutral }),
    ];
    let mut unchanged = Vec::new();
    for (name, v) in &variants {
        if rankings(&inference_pipeline(&net, &inputs, v).unwrap()) == base {
            unchanged.push(*name);
        }
    }
    let emb = inference_pipeline(&net, &inputs, &neutral).unwrap();
    let q = emb.select_rows(&(0..10).collect::<Vec<_>>());
    let g = emb.select_rows(&(10..30).collect::<Vec<_>>());
    let dist = DistanceMatrix::from_features(&q, &g).unwrap();
    let orig: Vec<Vec<usize>> = (0..10).map(|i| argsort_row(dist.query_gallery().row(i))).collect();
    let rr = rerank(&dist, 5, 3, 0.3).unwrap();
    if (0..10).map(|i| argsort_row(rr.row(i))).collect::<Vec<_>>() == orig {
        unchanged.push("rerank");
    }
    outcome(
        neutral_ok && unchanged.is_empty(),
        format!(
            "neutral pipeline matches normalised embeddings: {neutral_ok}; components without effect: {}",
            if unchanged.is_empty() { "none".to_string() } else { unchanged.join(",") }
        ),
    )
}

fn determinism() -> Outcome {
    let spec = ExperimentSpec {
        num_classes: 6,
        ..ExperimentSpec::default()
    };
    let one = |seed: u64| {
        let run = run_experiment(&spec, ExperimentSpec::run_seed(seed, 0)).unwrap();
        let (_, test) = spec.datasets(ExperimentSpec::run_seed(seed, 0)).unwrap();
        let emb = inference_pipeline(&run.outcome.net, &test.features, &InferenceConfig::cub_like()).unwrap();
        let cfg = RunConfig {
            seed,
            ..RunConfig::default()
        };
        let report = eval_single(
            &cfg,
            &LabeledFeatures {
                features: emb,
                labels: Some(test.labels.clone()),
            },
        )
        .unwrap();
        (run.outcome.log, report.to_rows())
    };
    let a = one(MASTER_SEED);
    let b = one(MASTER_SEED);
    outcome(a == b, format!("two runs: logs identical {}, reports identical {}", a.0 == b.0, a.1 == b.1))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("monotone consistency", monotone_consistency),
        ("homotopy inequality", homotopy),
        ("row-stochasticity and anchor immutability", stochastic_and_anchors),
        ("group loss gradients", gradient_correctness),
        ("refinement benefit on the hard set", refinement_benefit),
        ("trainability on the easy set", trainability),
        ("clamping vs shifting", clamping_vs_shifting),
        ("re-ranking oracle", rerank_oracle),
        ("metric oracles", metric_oracles),
        ("inference neutrality and effect", inference_neutrality_and_effect),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let o = check();
        println!("{} criterion {:>2} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, i + 1, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
