//! Small fully-connected embedder.
//!
//! `input → [dense → rectifier]* → dense → (pool × embedding_dim) block`.
//! The block is the pre-activation the inference toolbox works on; during
//! training it passes through the standard rectifier and is average-pooled
//! over the pool axis to give the embedding, and a linear classifier on the
//! embedding produces the logits.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    /// `out × in`
    pub weight: Matrix,
    pub bias: Vec<f64>,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            weight: Matrix::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
        }
    }

    fn uniform_fan_in(inputs: usize, outputs: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (inputs as f64).sqrt();
        Self {
            weight: Matrix::from_fn(outputs, inputs, |_, _| rng.gen_range(-bound..bound)),
            bias: vec![0.0; outputs],
        }
    }

    /// `x · Wᵀ + b` for a batch of row vectors.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        let mut out = x.matmul_t(&self.weight)?;
        for i in 0..out.rows() {
            for (o, b) in out.row_mut(i).iter_mut().zip(&self.bias) {
                *o += b;
            }
        }
        Ok(out)
    }

    pub fn inputs(&self) -> usize {
        self.weight.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weight.rows()
    }
}

/// Final activation applied to the pre-pool block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Activation {
    /// `max(0, x)`; used for training.
    Rectifier,
    /// `x` if `x ≥ 0`, else `slope · x`.
    Leaky(f64),
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Self::Rectifier => x.max(0.0),
            Self::Leaky(slope) => {
                if x >= 0.0 {
                    x
                } else {
                    slope * x
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpConfig {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub pool: usize,
    pub embedding_dim: usize,
    pub num_classes: usize,
}

impl MlpConfig {
    pub fn block_width(&self) -> usize {
        self.pool * self.embedding_dim
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpEmbedder {
    pub config: MlpConfig,
    pub hidden: Vec<Dense>,
    pub block: Dense,
    pub classifier: Dense,
}

/// Activations kept from a training forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Layer inputs: the batch itself, then every hidden activation.
    layer_inputs: Vec<Matrix>,
    /// Hidden pre-activations, for the rectifier masks.
    hidden_pre: Vec<Matrix>,
    block_pre: Matrix,
    pub embeddings: Matrix,
    pub logits: Matrix,
}

impl MlpEmbedder {
    /// All-zero parameters of the given shape.
    pub fn zeros(config: MlpConfig) -> Self {
        let mut hidden = Vec::new();
        let mut width = config.input_dim;
        for &h in &config.hidden {
            hidden.push(Dense::zeros(width, h));
            width = h;
        }
        Self {
            block: Dense::zeros(width, config.block_width()),
            classifier: Dense::zeros(config.embedding_dim, config.num_classes),
            hidden,
            config,
        }
    }

    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init(config: MlpConfig, seed: u64) -> Result<Self> {
        if config.input_dim == 0 || config.pool == 0 || config.embedding_dim == 0 || config.num_classes == 0 {
            return Err(Error::InvalidParameter {
                name: "mlp",
                reason: "every layer width must be positive".into(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut hidden = Vec::new();
        let mut width = config.input_dim;
        for &h in &config.hidden {
            hidden.push(Dense::uniform_fan_in(width, h, &mut rng));
            width = h;
        }
        let block = Dense::uniform_fan_in(width, config.block_width(), &mut rng);
        let classifier = Dense::uniform_fan_in(config.embedding_dim, config.num_classes, &mut rng);
        Ok(Self {
            config,
            hidden,
            block,
            classifier,
        })
    }

    fn check_input(&self, inputs: &Matrix) -> Result<()> {
        if inputs.cols() != self.config.input_dim {
            return Err(Error::ShapeMismatch(format!(
                "inputs have width {}, network expects {}",
                inputs.cols(),
                self.config.input_dim
            )));
        }
        Ok(())
    }

    fn trunk(&self, inputs: &Matrix) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
        let mut layer_inputs = vec![inputs.clone()];
        let mut hidden_pre = Vec::with_capacity(self.hidden.len());
        for layer in &self.hidden {
            let pre = layer.forward(layer_inputs.last().expect("non-empty"))?;
            layer_inputs.push(pre.map(|v| v.max(0.0)));
            hidden_pre.push(pre);
        }
        Ok((layer_inputs, hidden_pre))
    }

    /// Pre-activation block, `batch × (pool · embedding_dim)`, row-major per sample.
    pub fn pre_activation(&self, inputs: &Matrix) -> Result<Matrix> {
        self.check_input(inputs)?;
        let (layer_inputs, _) = self.trunk(inputs)?;
        self.block.forward(layer_inputs.last().expect("non-empty"))
    }

    /// Pre-activation block of every sample as a `pool × embedding_dim` matrix.
    pub fn embed(&self, inputs: &Matrix) -> Result<Vec<Matrix>> {
        let block = self.pre_activation(inputs)?;
        (0..block.rows())
            .map(|i| Matrix::from_vec(self.config.pool, self.config.embedding_dim, block.row(i).to_vec()))
            .collect()
    }

    fn pool_average(&self, block_pre: &Matrix) -> Matrix {
        let (p, e) = (self.config.pool, self.config.embedding_dim);
        let mut out = Matrix::zeros(block_pre.rows(), e);
        for i in 0..block_pre.rows() {
            let src = block_pre.row(i);
            let dst = out.row_mut(i);
            for k in 0..p {
                for (o, &v) in dst.iter_mut().zip(&src[k * e..(k + 1) * e]) {
                    *o += v.max(0.0);
                }
            }
            dst.iter_mut().for_each(|v| *v /= p as f64);
        }
        out
    }

    /// Train-time embedding: rectifier then average pooling.
    pub fn embed_train(&self, inputs: &Matrix) -> Result<Matrix> {
        Ok(self.pool_average(&self.pre_activation(inputs)?))
    }

    pub fn forward(&self, inputs: &Matrix) -> Result<ForwardCache> {
        self.check_input(inputs)?;
        let (layer_inputs, hidden_pre) = self.trunk(inputs)?;
        let block_pre = self.block.forward(layer_inputs.last().expect("non-empty"))?;
        let embeddings = self.pool_average(&block_pre);
        let logits = self.classifier.forward(&embeddings)?;
        Ok(ForwardCache {
            layer_inputs,
            hidden_pre,
            block_pre,
            embeddings,
            logits,
        })
    }

    /// Parameter gradients given cotangents on the embeddings and logits.
    pub fn backward(&self, cache: &ForwardCache, d_embeddings: &Matrix, d_logits: &Matrix) -> Result<MlpEmbedder> {
        let mut grads = MlpEmbedder::zeros(self.config.clone());
        let n = cache.embeddings.rows();
        if d_embeddings.shape() != cache.embeddings.shape() || d_logits.shape() != cache.logits.shape() {
            return Err(Error::ShapeMismatch("cotangents do not match the forward pass".into()));
        }

        // classifier
        grads.classifier.weight = d_logits.t_matmul(&cache.embeddings)?;
        grads.classifier.bias = column_sums(d_logits);
        let mut d_emb = d_logits.matmul(&self.classifier.weight)?;
        for (a, b) in d_emb.as_mut_slice().iter_mut().zip(d_embeddings.as_slice()) {
            *a += b;
        }

        // average pool over the rectified block
        let (p, e) = (self.config.pool, self.config.embedding_dim);
        let mut d_block = Matrix::zeros(n, p * e);
        for i in 0..n {
            let pre = cache.block_pre.row(i);
            let g = d_emb.row(i);
            let out = d_block.row_mut(i);
            for k in 0..p {
                for j in 0..e {
                    if pre[k * e + j] > 0.0 {
                        out[k * e + j] = g[j] / p as f64;
                    }
                }
            }
        }

        let block_input = cache.layer_inputs.last().expect("non-empty");
        grads.block.weight = d_block.t_matmul(block_input)?;
        grads.block.bias = column_sums(&d_block);
        let mut d_act = d_block.matmul(&self.block.weight)?;

        for l in (0..self.hidden.len()).rev() {
            let pre = &cache.hidden_pre[l];
            for (g, &z) in d_act.as_mut_slice().iter_mut().zip(pre.as_slice()) {
                if z <= 0.0 {
                    *g = 0.0;
                }
            }
            grads.hidden[l].weight = d_act.t_matmul(&cache.layer_inputs[l])?;
            grads.hidden[l].bias = column_sums(&d_act);
            if l > 0 {
                d_act = d_act.matmul(&self.hidden[l].weight)?;
            }
        }
        Ok(grads)
    }

    /// Every parameter tensor, in a fixed order.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in self.hidden.iter().chain([&self.block, &self.classifier]) {
            out.push(layer.weight.as_slice());
            out.push(layer.bias.as_slice());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in self.hidden.iter_mut().chain([&mut self.block, &mut self.classifier]) {
            out.push(layer.weight.as_mut_slice());
            out.push(layer.bias.as_mut_slice());
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.params().iter().all(|p| p.iter().all(|v| v.is_finite()))
    }
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut out = vec![0.0; m.cols()];
    for row in m.iter_rows() {
        for (o, v) in out.iter_mut().zip(row) {
            *o += v;
        }
    }
    out
}
