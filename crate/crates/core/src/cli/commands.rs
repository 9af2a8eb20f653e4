//! Subcommands. Every command that takes `--out` treats it as its run
//! directory and writes `config.ini`, `seed`, `version` and `command` there
//! next to its artifacts.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use super::config::RunConfig;
use super::io::{load_features, save_features, FeatureFormat, LabeledFeatures};
use super::report::{write_file, Report};
use super::VERSION;
use crate::embednet::{refinement_sweep, train, Dataset, ExperimentSpec, MlpEmbedder, Split};
use crate::error::{Error, Result};
use crate::inference::inference_pipeline;
use crate::matrix::Matrix;
use crate::metrics::{
    cmc, kmeans, mean_average_precision, nmi, pairwise_euclidean, recall_at_k, KMeansConfig, Partition, RankedRetrieval,
};
use crate::rerank::{rerank_with, DistanceMatrix};
use crate::seed::{derive_seed, Stream};

#[derive(Debug, Parser)]
#[command(name = "glpp", version, about = "Group-loss metric learning on feature vectors")]
pub struct Cli {
    #[command(flatten)]
    pub common: CommonArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    /// INI-style `key = value` configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override one key, e.g. `--set steps=0`. Applied after the file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic train and test splits.
    GenData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "bin")]
        format: FeatureFormat,
    },
    /// Train an embedder; writes model.json, log.jsonl and metrics.
    Train {
        #[arg(long)]
        out: PathBuf,
        /// Directory produced by `gen-data`; generated in memory when absent.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Embed a feature file with a trained model and the inference settings.
    Embed {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "bin")]
        format: FeatureFormat,
    },
    /// Re-rank query/gallery embeddings; writes distances.glpp and ranking.csv.
    Rerank {
        #[arg(long)]
        query: PathBuf,
        #[arg(long)]
        gallery: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print a metric report for one labelled set or a query/gallery pair.
    Eval {
        #[arg(long, conflicts_with_all = ["query", "gallery"], required_unless_present = "query")]
        embeddings: Option<PathBuf>,
        #[arg(long, requires = "gallery")]
        query: Option<PathBuf>,
        #[arg(long, requires = "query")]
        gallery: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train with 0..=5 refinement steps over `sweep_seeds` seeds and tabulate.
    Sweep {
        #[arg(long)]
        out: PathBuf,
    },
}

pub fn load_config(common: &CommonArgs) -> Result<RunConfig> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::from_path(p)?,
        None => RunConfig::default(),
    };
    for o in &common.overrides {
        let (k, v) = o.split_once('=').ok_or_else(|| Error::InvalidValue {
            key: o.clone(),
            reason: "expected KEY=VALUE".into(),
        })?;
        cfg.set(k.trim(), v.trim())?;
    }
    cfg.apply_env()?;
    cfg.validate()?;
    Ok(cfg)
}

fn prepare_run_dir(dir: &Path, cfg: &RunConfig, command: &str) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io(format!("{}: {e}", dir.display())))?;
    write_file(&dir.join("config.ini"), &cfg.to_ini())?;
    write_file(&dir.join("seed"), &format!("{}\n", cfg.seed))?;
    write_file(&dir.join("version"), &format!("{VERSION}\n"))?;
    write_file(&dir.join("command"), &format!("{command}\n"))
}

fn io_fail(e: std::io::Error) -> Error {
    Error::Io(e.to_string())
}

pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    let cfg = load_config(&cli.common)?;
    let name = match &cli.command {
        Command::GenData { .. } => "gen-data",
        Command::Train { .. } => "train",
        Command::Embed { .. } => "embed",
        Command::Rerank { .. } => "rerank",
        Command::Eval { .. } => "eval",
        Command::Sweep { .. } => "sweep",
    };
    match &cli.command {
        Command::GenData { out: dir, format } => {
            prepare_run_dir(dir, &cfg, name)?;
            gen_data(&cfg, dir, *format)
        }
        Command::Train { out: dir, data } => {
            prepare_run_dir(dir, &cfg, name)?;
            let report = train_cmd(&cfg, dir, data.as_deref())?;
            out.write_all(report.to_text().as_bytes()).map_err(io_fail)
        }
        Command::Embed {
            model,
            input,
            out: dir,
            format,
        } => {
            prepare_run_dir(dir, &cfg, name)?;
            embed_cmd(&cfg, model, input, dir, *format)
        }
        Command::Rerank { query, gallery, out: dir } => {
            prepare_run_dir(dir, &cfg, name)?;
            rerank_cmd(&cfg, query, gallery, dir)
        }
        Command::Eval {
            embeddings,
            query,
            gallery,
            out: dir,
        } => {
            if let Some(d) = dir {
                prepare_run_dir(d, &cfg, name)?;
            }
            let report = match (embeddings, query, gallery) {
                (Some(e), _, _) => eval_single(&cfg, &load_features(e)?)?,
                (None, Some(q), Some(g)) => eval_query_gallery(&cfg, &load_features(q)?, &load_features(g)?)?,
                _ => return Err(Error::MissingRequired("--embeddings or --query/--gallery".into())),
            };
            if let Some(d) = dir {
                report.write(d, "metrics")?;
            }
            out.write_all(report.to_text().as_bytes()).map_err(io_fail)
        }
        Command::Sweep { out: dir } => {
            prepare_run_dir(dir, &cfg, name)?;
            let table = sweep_cmd(&cfg, dir)?;
            out.write_all(table.as_bytes()).map_err(io_fail)
        }
    }
}

/// The data, init and batch seed of the single run made by `gen-data`/`train`.
pub fn run_seed(cfg: &RunConfig) -> u64 {
    ExperimentSpec::run_seed(cfg.seed, 0)
}

fn gen_data(cfg: &RunConfig, dir: &Path, format: FeatureFormat) -> Result<()> {
    let (tr, te) = cfg.experiment.datasets(run_seed(cfg))?;
    for (stem, d) in [("train", &tr), ("test", &te)] {
        let path = dir.join(format!("{stem}.{}", format.extension()));
        save_features(&path, &d.features, Some(&d.labels))?;
    }
    Ok(())
}

fn find_split(dir: &Path, stem: &str) -> Result<PathBuf> {
    ["glpp", "csv"]
        .iter()
        .map(|ext| dir.join(format!("{stem}.{ext}")))
        .find(|p| p.exists())
        .ok_or_else(|| Error::MissingRequired(format!("{stem}.glpp or {stem}.csv in {}", dir.display())))
}

fn load_dataset(path: &Path, split: Split) -> Result<Dataset> {
    let lf = load_features(path)?;
    let labels = lf.require_labels(&path.display().to_string())?.to_vec();
    Dataset::new(lf.features, labels, split)
}

fn train_cmd(cfg: &RunConfig, dir: &Path, data: Option<&Path>) -> Result<Report> {
    let s = run_seed(cfg);
    let (tr, te) = match data {
        Some(d) => (
            load_dataset(&find_split(d, "train")?, Split::Train)?,
            load_dataset(&find_split(d, "test")?, Split::Test)?,
        ),
        None => cfg.experiment.datasets(s)?,
    };
    let mut spec = cfg.experiment.clone();
    spec.dim = tr.dim();
    spec.num_classes = spec.num_classes.max(tr.num_classes);
    let net = MlpEmbedder::init(spec.model_config(), derive_seed(s, Stream::Init, 0))?;
    let tcfg = crate::embednet::TrainConfig {
        seed: s,
        ..spec.train.clone()
    };
    let outcome = train(&tr, Some(&te), net, &tcfg)?;
    let model = serde_json::to_string(&outcome.net).map_err(|e| Error::Io(e.to_string()))?;
    write_file(&dir.join("model.json"), &model)?;
    let mut log = String::new();
    for e in &outcome.log {
        log.push_str(&serde_json::to_string(e).map_err(|e| Error::Io(e.to_string()))?);
        log.push('\n');
    }
    write_file(&dir.join("log.jsonl"), &log)?;
    let mut report = Report::new();
    report.push_count("epochs", outcome.log.len());
    if let Some(last) = outcome.log.last() {
        report.push("loss", last.mean_loss);
        report.push_count("skipped_batches", outcome.log.iter().map(|e| e.skipped_batches).sum());
        match &last.test {
            Some(t) => {
                for (k, r) in &t.recall {
                    report.push(format!("Recall@{k}"), *r);
                }
                report.push("NMI", t.nmi);
            }
            None => report.push_count("collapsed", 1),
        }
    }
    report.write(dir, "metrics")?;
    Ok(report)
}

fn load_model(path: &Path) -> Result<MlpEmbedder> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::InvalidValue {
        key: path.display().to_string(),
        reason: format!("not a model checkpoint: {e}"),
    })
}

fn embed_cmd(cfg: &RunConfig, model: &Path, input: &Path, dir: &Path, format: FeatureFormat) -> Result<()> {
    let net = load_model(model)?;
    let lf = load_features(input)?;
    let emb = inference_pipeline(&net, &lf.features, &cfg.inference)?;
    let path = dir.join(format!("embeddings.{}", format.extension()));
    save_features(&path, &emb, lf.labels.as_deref())
}

fn distances(cfg: &RunConfig, q: &Matrix, g: &Matrix, rerank: bool) -> Result<Matrix> {
    if rerank {
        rerank_with(&DistanceMatrix::from_features(q, g)?, &cfg.rerank_params)
    } else {
        pairwise_euclidean(q, g)
    }
}

fn rerank_cmd(cfg: &RunConfig, query: &Path, gallery: &Path, dir: &Path) -> Result<()> {
    let q = load_features(query)?;
    let g = load_features(gallery)?;
    let d = distances(cfg, &q.features, &g.features, true)?;
    save_features(&dir.join("distances.glpp"), &d, None)?;
    let mut rows = String::from("query,rank,gallery,distance\n");
    for i in 0..d.rows() {
        for (rank, j) in crate::metrics::argsort_row(d.row(i)).into_iter().enumerate() {
            rows.push_str(&format!("{i},{rank},{j},{:?}\n", d.get(i, j)));
        }
    }
    write_file(&dir.join("ranking.csv"), &rows)
}

pub fn eval_single(cfg: &RunConfig, set: &LabeledFeatures) -> Result<Report> {
    let labels = set.require_labels("eval")?;
    let dist = pairwise_euclidean(&set.features, &set.features)?;
    let ranked = RankedRetrieval::single_set(&dist, labels)?;
    let mut report = Report::new();
    report.push_count("items", labels.len());
    for k in [1usize, 2, 4, 8].into_iter().filter(|&k| k < labels.len()) {
        report.push(format!("Recall@{k}"), recall_at_k(&ranked, k)?);
    }
    let truth = Partition::from_labels(labels);
    let clusters = kmeans(
        &set.features,
        truth.count().max(1),
        derive_seed(cfg.seed, Stream::KMeans, 0),
        KMeansConfig::default().max_iter,
    )?;
    report.push("NMI", nmi(&clusters, &truth)?);
    Ok(report)
}

pub fn eval_query_gallery(cfg: &RunConfig, q: &LabeledFeatures, g: &LabeledFeatures) -> Result<Report> {
    let ql = q.require_labels("queries")?;
    let gl = g.require_labels("gallery")?;
    let d = distances(cfg, &q.features, &g.features, cfg.rerank)?;
    let ranked = RankedRetrieval::query_gallery(&d, ql, gl)?;
    let mut report = Report::new();
    report.push_count("queries", ql.len());
    report.push_count("gallery", gl.len());
    report.push_count("reranked", usize::from(cfg.rerank));
    for k in [1usize, 5, 10].into_iter().filter(|&k| k <= gl.len()) {
        report.push(format!("CMC@{k}"), cmc(&ranked, k)?);
    }
    report.push("mAP", mean_average_precision(&ranked)?);
    Ok(report)
}

fn sweep_cmd(cfg: &RunConfig, dir: &Path) -> Result<String> {
    let rows = refinement_sweep(&cfg.experiment, &[0, 1, 2, 3, 4, 5], cfg.seed, cfg.sweep_seeds)?;
    let mut csv = String::from("steps,median_recall_at_1,median_nmi");
    for i in 0..cfg.sweep_seeds {
        csv.push_str(&format!(",recall_at_1_seed{i}"));
    }
    csv.push('\n');
    let mut table = String::from("steps  Recall@1  NMI\n");
    for r in &rows {
        csv.push_str(&format!("{},{:?},{:?}", r.steps, r.median_recall_at_1, r.median_nmi));
        for v in &r.recall_at_1 {
            csv.push_str(&format!(",{v:?}"));
        }
        csv.push('\n');
        table.push_str(&format!("{:>5}  {:>8.3}  {:.3}\n", r.steps, r.median_recall_at_1, r.median_nmi));
    }
    write_file(&dir.join("sweep.csv"), &csv)?;
    write_file(&dir.join("sweep.txt"), &table)?;
    Ok(table)
}
