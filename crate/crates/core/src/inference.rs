//! Test-time embedding toolbox: leaky final activation, mixed pooling,
//! β-normalisation, averaging over an input involution, and ensemble
//! concatenation.
//!
//! The pipeline order is fixed: block pre-activation → final activation →
//! mixed pooling → β-normalisation. Involution averaging either averages the
//! pooled vectors and normalises once (default) or wraps the whole chain.

use serde::{Deserialize, Serialize};

use crate::embednet::mlp::{Activation, MlpEmbedder};
use crate::error::{Error, Result};
use crate::matrix::{norm, Matrix};

/// `v/‖v‖₂ + β·v`.
pub fn beta_normalize(v: &[f64], beta: f64) -> Result<Vec<f64>> {
    if !(beta >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "beta",
            reason: "must be non-negative".into(),
        });
    }
    let n = norm(v);
    if !(n > 0.0) {
        return Err(Error::ZeroVector);
    }
    Ok(v.iter().map(|&x| x / n + beta * x).collect())
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidParameter {
            name: "alpha",
            reason: "must be in [0,1]".into(),
        });
    }
    Ok(())
}

fn check_slope(slope: f64) -> Result<()> {
    if !(slope > 0.0 && slope <= 1.0) {
        return Err(Error::InvalidParameter {
            name: "leaky_slope",
            reason: "must be in (0,1]".into(),
        });
    }
    Ok(())
}

/// Column-wise `α·max + (1−α)·mean` over the rows of a `pool × dim` block.
pub fn mixed_pool(block: &Matrix, alpha: f64) -> Result<Vec<f64>> {
    check_alpha(alpha)?;
    let (p, d) = block.shape();
    if p == 0 {
        return Err(Error::ShapeMismatch("cannot pool an empty block".into()));
    }
    let mut sum = vec![0.0; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for row in block.iter_rows() {
        for ((s, m), &v) in sum.iter_mut().zip(max.iter_mut()).zip(row) {
            *s += v;
            *m = m.max(v);
        }
    }
    Ok(sum
        .iter()
        .zip(&max)
        .map(|(&s, &m)| alpha * m + (1.0 - alpha) * (s / p as f64))
        .collect())
}

/// Leaky rectifier with the given negative slope.
pub fn leaky_final(block: &Matrix, slope: f64) -> Result<Matrix> {
    check_slope(slope)?;
    Ok(block.map(|x| Activation::Leaky(slope).apply(x)))
}

/// An input transform with `t(t(x)) = x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Involution {
    Identity,
    /// Coordinate reversal, the vector analogue of a horizontal flip.
    #[default]
    Reverse,
    Negate,
}

impl Involution {
    pub fn apply(self, x: &[f64]) -> Vec<f64> {
        match self {
            Self::Identity => x.to_vec(),
            Self::Reverse => x.iter().rev().copied().collect(),
            Self::Negate => x.iter().map(|v| -v).collect(),
        }
    }
}

impl std::str::FromStr for Involution {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "identity" => Ok(Self::Identity),
            "reverse" => Ok(Self::Reverse),
            "negate" => Ok(Self::Negate),
            other => Err(format!("unknown involution `{other}`")),
        }
    }
}

impl std::fmt::Display for Involution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Identity => "identity",
            Self::Reverse => "reverse",
            Self::Negate => "negate",
        })
    }
}

/// `(f(x) + f(t(x))) / 2`, after checking `t(t(x)) = x` on this input.
///
/// The two terms are summed in a canonical order (smaller bit pattern of
/// the first input coordinate first) so that swapping `x` and `t(x)` gives
/// bitwise-identical output.
pub fn tta_average<F, T>(embed: F, transform: T, input: &[f64]) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> Result<Vec<f64>>,
    T: Fn(&[f64]) -> Vec<f64>,
{
    let image = transform(input);
    if transform(&image) != input {
        return Err(Error::NotInvolution);
    }
    let (first, second) = if canonical_first(input, &image) {
        (input, image.as_slice())
    } else {
        (image.as_slice(), input)
    };
    let a = embed(first)?;
    let b = embed(second)?;
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch("embedding width changed under transform".into()));
    }
    Ok(a.iter().zip(&b).map(|(x, y)| (x + y) / 2.0).collect())
}

fn canonical_first(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Less => return true,
            std::cmp::Ordering::Greater => return false,
            std::cmp::Ordering::Equal => {}
        }
    }
    true
}

/// Concatenates embeddings in list order.
pub fn ensemble_concat(parts: &[Vec<f64>]) -> Result<Vec<f64>> {
    if parts.is_empty() {
        return Err(Error::EmptyList);
    }
    Ok(parts.iter().flatten().copied().collect())
}

/// Row-wise concatenation of several embedding matrices of the same inputs.
pub fn ensemble_concat_rows(parts: &[Matrix]) -> Result<Matrix> {
    let first = parts.first().ok_or(Error::EmptyList)?;
    if parts.iter().any(|m| m.rows() != first.rows()) {
        return Err(Error::ShapeMismatch("ensemble members embed different sample counts".into()));
    }
    let width = parts.iter().map(Matrix::cols).sum();
    let mut out = Matrix::zeros(first.rows(), width);
    for i in 0..first.rows() {
        let row = out.row_mut(i);
        let mut at = 0;
        for m in parts {
            row[at..at + m.cols()].copy_from_slice(m.row(i));
            at += m.cols();
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InferenceConfig {
    /// Apply β-normalisation; off leaves the pooled vector untouched.
    pub normalize: bool,
    pub beta: f64,
    pub alpha: f64,
    /// Negative slope of the final activation; `None` keeps the training rectifier.
    pub leaky_slope: Option<f64>,
    pub use_flip: bool,
    pub transform: Involution,
    /// Average fully normalised embeddings instead of pooled vectors.
    pub flip_after_normalize: bool,
}

impl Default for InferenceConfig {
    /// Neutral settings: average pooling, rectifier, plain euclidean normalisation.
    fn default() -> Self {
        Self {
            normalize: true,
            beta: 0.0,
            alpha: 0.0,
            leaky_slope: None,
            use_flip: false,
            transform: Involution::Reverse,
            flip_after_normalize: false,
        }
    }
}

impl InferenceConfig {
    /// Values tuned for the fine-grained birds benchmark.
    pub fn cub_like() -> Self {
        Self {
            beta: 0.004,
            alpha: 0.5,
            leaky_slope: Some(0.75),
            use_flip: true,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_alpha(self.alpha)?;
        if !(self.beta >= 0.0) {
            return Err(Error::InvalidParameter {
                name: "beta",
                reason: "must be non-negative".into(),
            });
        }
        if let Some(s) = self.leaky_slope {
            check_slope(s)?;
        }
        Ok(())
    }

    fn activation(&self) -> Activation {
        self.leaky_slope.map_or(Activation::Rectifier, Activation::Leaky)
    }
}

fn pooled(net: &MlpEmbedder, input: &[f64], cfg: &InferenceConfig) -> Result<Vec<f64>> {
    let x = Matrix::from_vec(1, input.len(), input.to_vec())?;
    let block = net.embed(&x)?.pop().expect("one input row");
    let act = cfg.activation();
    mixed_pool(&block.map(|v| act.apply(v)), cfg.alpha)
}

fn finish(v: Vec<f64>, cfg: &InferenceConfig) -> Result<Vec<f64>> {
    if cfg.normalize {
        beta_normalize(&v, cfg.beta)
    } else {
        Ok(v)
    }
}

/// Embeds one input with the configured toolbox.
pub fn embed_one(net: &MlpEmbedder, input: &[f64], cfg: &InferenceConfig) -> Result<Vec<f64>> {
    if !cfg.use_flip {
        return finish(pooled(net, input, cfg)?, cfg);
    }
    let t = |x: &[f64]| cfg.transform.apply(x);
    if cfg.flip_after_normalize {
        tta_average(|x| finish(pooled(net, x, cfg)?, cfg), t, input)
    } else {
        finish(tta_average(|x| pooled(net, x, cfg), t, input)?, cfg)
    }
}

/// Embeds every row of `inputs`.
pub fn inference_pipeline(net: &MlpEmbedder, inputs: &Matrix, cfg: &InferenceConfig) -> Result<Matrix> {
    cfg.validate()?;
    let mut out = Matrix::zeros(inputs.rows(), net.config.embedding_dim);
    for i in 0..inputs.rows() {
        let e = embed_one(net, inputs.row(i), cfg)?;
        out.row_mut(i).copy_from_slice(&e);
    }
    Ok(out)
}
