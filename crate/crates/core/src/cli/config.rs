//! INI-style `key = value` run configuration.
//!
//! Keys are flat; `[section]` lines are accepted for readability and ignored.
//! `#` and `;` start comment lines. `preset = cub-like` loads the tuned
//! inference and re-ranking values first; explicit keys then override them.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::embednet::{CenterLayout, ExperimentSpec, OptimizerKind};
use crate::error::{Error, Result};
use crate::inference::{InferenceConfig, Involution};
use crate::rerank::{LambdaWeights, RerankConfig};
use crate::simgraph::SimilarityMode;

pub const SEED_ENV: &str = "GLPP_SEED";

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub experiment: ExperimentSpec,
    pub inference: InferenceConfig,
    /// Re-rank query/gallery distances in `eval`.
    pub rerank: bool,
    pub rerank_params: RerankConfig,
    pub sweep_seeds: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            experiment: ExperimentSpec::default(),
            inference: InferenceConfig::default(),
            rerank: false,
            rerank_params: RerankConfig::cub_like(),
            sweep_seeds: 5,
        }
    }
}

pub const PRESETS: &[&str] = &["cub-like"];

fn invalid(key: &str, reason: impl Into<String>) -> Error {
    Error::InvalidValue {
        key: key.to_string(),
        reason: reason.into(),
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value.parse().map_err(|_| invalid(key, format!("cannot parse `{value}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(invalid(key, format!("expected a boolean, got `{value}`"))),
    }
}

fn parse_with<T>(key: &str, value: &str, f: impl FnOnce(&str) -> std::result::Result<T, String>) -> Result<T> {
    f(value).map_err(|e| invalid(key, e))
}

impl RunConfig {
    pub fn preset(name: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_preset(name)?;
        Ok(cfg)
    }

    fn apply_preset(&mut self, name: &str) -> Result<()> {
        match name {
            "cub-like" => {
                self.inference = InferenceConfig::cub_like();
                self.rerank_params = RerankConfig::cub_like();
                Ok(())
            }
            other => Err(invalid("preset", format!("unknown preset `{other}` (known: {})", PRESETS.join(", ")))),
        }
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        Self::parse_str(&text)
    }

    pub fn parse_str(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
                continue;
            }
            if line.starts_with('[') && line.ends_with(']') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| invalid(line, format!("line {} is not `key = value`", n + 1)))?;
            pairs.push((k.trim().to_string(), v.trim().to_string()));
        }
        Self::from_pairs(&pairs)
    }

    /// Preset first, then every other pair in order.
    pub fn from_pairs(pairs: &[(String, String)]) -> Result<Self> {
        let mut cfg = Self::default();
        for (k, v) in pairs.iter().filter(|(k, _)| k == "preset") {
            if v.is_empty() {
                return Err(Error::MissingRequired(k.clone()));
            }
            cfg.apply_preset(v)?;
        }
        for (k, v) in pairs.iter().filter(|(k, _)| k != "preset") {
            cfg.set(k, v)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let e = &mut self.experiment;
        let t = &mut e.train;
        let inf = &mut self.inference;
        let rr = &mut self.rerank_params;
        match key {
            "seed" => self.seed = parse(key, value)?,
            "num_classes" => e.num_classes = parse(key, value)?,
            "per_class" => e.per_class = parse(key, value)?,
            "test_per_class" => e.test_per_class = parse(key, value)?,
            "dim" => e.dim = parse(key, value)?,
            "spread" => e.spread = parse(key, value)?,
            "layout" => e.layout = parse_with(key, value, CenterLayout::from_str)?,
            "hidden" => {
                e.hidden = if value.is_empty() {
                    Vec::new()
                } else {
                    value.split(',').map(|s| parse(key, s.trim())).collect::<Result<_>>()?
                }
            }
            "pool" => e.pool = parse(key, value)?,
            "embedding_dim" => e.embedding_dim = parse(key, value)?,
            "epochs" => t.epochs = parse(key, value)?,
            "warmup_epochs" => t.warmup_epochs = parse(key, value)?,
            "learning_rate" => t.learning_rate = parse(key, value)?,
            "optimizer" => {
                t.optimizer.kind = match value {
                    "sgd" => OptimizerKind::Sgd { momentum: 0.9 },
                    "adam" => OptimizerKind::Adam {
                        beta1: 0.9,
                        beta2: 0.999,
                        eps: 1e-8,
                    },
                    _ => return Err(invalid(key, "expected `sgd` or `adam`")),
                }
            }
            "momentum" => match &mut t.optimizer.kind {
                OptimizerKind::Sgd { momentum } => *momentum = parse(key, value)?,
                _ => return Err(invalid(key, "only applies to optimizer = sgd")),
            },
            "adam_beta1" | "adam_beta2" | "adam_eps" => match &mut t.optimizer.kind {
                OptimizerKind::Adam { beta1, beta2, eps } => {
                    let slot = match key {
                        "adam_beta1" => beta1,
                        "adam_beta2" => beta2,
                        _ => eps,
                    };
                    *slot = parse(key, value)?;
                }
                _ => return Err(invalid(key, "only applies to optimizer = adam")),
            },
            "weight_decay" => t.optimizer.weight_decay = parse(key, value)?,
            "classes_per_batch" => t.batch.classes_per_batch = parse(key, value)?,
            "samples_per_class" => t.batch.samples_per_class = parse(key, value)?,
            "anchors_per_class" => t.batch.anchors_per_class = parse(key, value)?,
            "batches_per_epoch" => {
                t.batches_per_epoch = match value {
                    "auto" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "skip_degenerate" => t.skip_degenerate = parse_bool(key, value)?,
            "steps" => t.loss.steps = parse(key, value)?,
            "temperature" => t.loss.temperature = parse(key, value)?,
            "similarity" => t.loss.mode = parse_with(key, value, SimilarityMode::from_str)?,
            "detach_w" => t.loss.detach_w = parse_bool(key, value)?,
            "normalize" => inf.normalize = parse_bool(key, value)?,
            "beta" => inf.beta = parse(key, value)?,
            "alpha" => inf.alpha = parse(key, value)?,
            "leaky_slope" => {
                inf.leaky_slope = match value {
                    "none" => None,
                    v => Some(parse(key, v)?),
                }
            }
            "flip" => inf.use_flip = parse_bool(key, value)?,
            "involution" => inf.transform = parse_with(key, value, Involution::from_str)?,
            "flip_after_normalize" => inf.flip_after_normalize = parse_bool(key, value)?,
            "rerank" => self.rerank = parse_bool(key, value)?,
            "k1" => rr.k1 = parse(key, value)?,
            "k2" => rr.k2 = parse(key, value)?,
            "lambda" => rr.lambda = parse(key, value)?,
            "lambda_weights" => {
                rr.lambda_weights = match value {
                    "original" => LambdaWeights::Original,
                    "jaccard" => LambdaWeights::Jaccard,
                    _ => return Err(invalid(key, "expected `original` or `jaccard`")),
                }
            }
            "sweep_seeds" => self.sweep_seeds = parse(key, value)?,
            "preset" => self.apply_preset(value)?,
            other => return Err(Error::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let e = &self.experiment;
        let t = &e.train;
        let positive = |key: &str, v: usize| if v == 0 { Err(invalid(key, "must be at least 1")) } else { Ok(()) };
        positive("num_classes", e.num_classes)?;
        positive("dim", e.dim)?;
        positive("pool", e.pool)?;
        positive("embedding_dim", e.embedding_dim)?;
        positive("sweep_seeds", self.sweep_seeds)?;
        if e.hidden.contains(&0) {
            return Err(invalid("hidden", "layer widths must be at least 1"));
        }
        if e.test_per_class >= e.per_class {
            return Err(invalid("test_per_class", "must be smaller than per_class"));
        }
        if !(e.spread >= 0.0 && e.spread.is_finite()) {
            return Err(invalid("spread", "must be finite and non-negative"));
        }
        if !(t.learning_rate >= 0.0 && t.learning_rate.is_finite()) {
            return Err(invalid("learning_rate", "must be finite and non-negative"));
        }
        if !(t.optimizer.weight_decay >= 0.0) {
            return Err(invalid("weight_decay", "must be non-negative"));
        }
        if !(t.loss.temperature > 0.0) {
            return Err(invalid("temperature", "must be positive"));
        }
        let b = &t.batch;
        if b.classes_per_batch > e.num_classes {
            return Err(invalid("classes_per_batch", "exceeds num_classes"));
        }
        if b.samples_per_class > e.per_class - e.test_per_class {
            return Err(invalid("samples_per_class", "exceeds the training samples per class"));
        }
        if t.batches_per_epoch == Some(0) {
            return Err(invalid("batches_per_epoch", "must be at least 1 or `auto`"));
        }
        let as_value = |err: Error| match err {
            Error::InvalidParameter { name, reason } => invalid(name, reason),
            Error::InvalidBatchSpec(reason) => invalid("anchors_per_class", reason),
            other => other,
        };
        b.validate().map_err(as_value)?;
        self.inference.validate().map_err(as_value)?;
        self.rerank_params.validate().map_err(as_value)?;
        Ok(())
    }

    /// Replaces the seed with `GLPP_SEED` when that variable is set.
    pub fn apply_env(&mut self) -> Result<()> {
        self.apply_seed_override(std::env::var(SEED_ENV).ok().as_deref())
    }

    pub fn apply_seed_override(&mut self, value: Option<&str>) -> Result<()> {
        if let Some(v) = value {
            self.seed = parse(SEED_ENV, v.trim())?;
        }
        Ok(())
    }

    /// Effective configuration; parsing it back yields an equal config.
    pub fn to_ini(&self) -> String {
        let e = &self.experiment;
        let t = &e.train;
        let inf = &self.inference;
        let rr = &self.rerank_params;
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("seed", self.seed.to_string());
        kv("num_classes", e.num_classes.to_string());
        kv("per_class", e.per_class.to_string());
        kv("test_per_class", e.test_per_class.to_string());
        kv("dim", e.dim.to_string());
        kv("spread", format!("{:?}", e.spread));
        kv("layout", e.layout.to_string());
        kv("hidden", e.hidden.iter().map(ToString::to_string).collect::<Vec<_>>().join(","));
        kv("pool", e.pool.to_string());
        kv("embedding_dim", e.embedding_dim.to_string());
        kv("epochs", t.epochs.to_string());
        kv("warmup_epochs", t.warmup_epochs.to_string());
        kv("learning_rate", format!("{:?}", t.learning_rate));
        match t.optimizer.kind {
            OptimizerKind::Sgd { momentum } => {
                kv("optimizer", "sgd".into());
                kv("momentum", format!("{momentum:?}"));
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                kv("optimizer", "adam".into());
                kv("adam_beta1", format!("{beta1:?}"));
                kv("adam_beta2", format!("{beta2:?}"));
                kv("adam_eps", format!("{eps:?}"));
            }
        }
        kv("weight_decay", format!("{:?}", t.optimizer.weight_decay));
        kv("classes_per_batch", t.batch.classes_per_batch.to_string());
        kv("samples_per_class", t.batch.samples_per_class.to_string());
        kv("anchors_per_class", t.batch.anchors_per_class.to_string());
        kv(
            "batches_per_epoch",
            t.batches_per_epoch.map_or("auto".into(), |b| b.to_string()),
        );
        kv("skip_degenerate", t.skip_degenerate.to_string());
        kv("steps", t.loss.steps.to_string());
        kv("temperature", format!("{:?}", t.loss.temperature));
        kv("similarity", t.loss.mode.to_string());
        kv("detach_w", t.loss.detach_w.to_string());
        kv("normalize", inf.normalize.to_string());
        kv("beta", format!("{:?}", inf.beta));
        kv("alpha", format!("{:?}", inf.alpha));
        kv("leaky_slope", inf.leaky_slope.map_or("none".into(), |s| format!("{s:?}")));
        kv("flip", inf.use_flip.to_string());
        kv("involution", inf.transform.to_string());
        kv("flip_after_normalize", inf.flip_after_normalize.to_string());
        kv("rerank", self.rerank.to_string());
        kv("k1", rr.k1.to_string());
        kv("k2", rr.k2.to_string());
        kv("lambda", format!("{:?}", rr.lambda));
        kv(
            "lambda_weights",
            match rr.lambda_weights {
                LambdaWeights::Original => "original",
                LambdaWeights::Jaccard => "jaccard",
            }
            .into(),
        );
        kv("sweep_seeds", self.sweep_seeds.to_string());
        s
    }
}
