//! Synthetic Gaussian-blob datasets and the class-balanced batch sampler.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: Matrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<usize>, split: Split) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} feature rows but {} labels",
                features.rows(),
                labels.len()
            )));
        }
        let num_classes = labels.iter().max().map_or(0, |m| m + 1);
        Ok(Self {
            features,
            labels,
            num_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    /// Indices of every sample, grouped by class.
    pub fn class_members(&self) -> Vec<Vec<usize>> {
        let mut members = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            members[l].push(i);
        }
        members
    }

    /// Splits off the last `test_per_class` samples of every class as the
    /// test split; the rest form the train split.
    pub fn holdout(&self, test_per_class: usize) -> Result<(Dataset, Dataset)> {
        let mut train = Vec::new();
        let mut test = Vec::new();
        for (class, members) in self.class_members().into_iter().enumerate() {
            if members.len() <= test_per_class {
                return Err(Error::InsufficientSamples {
                    class,
                    needed: test_per_class + 1,
                    available: members.len(),
                });
            }
            let cut = members.len() - test_per_class;
            train.extend_from_slice(&members[..cut]);
            test.extend_from_slice(&members[cut..]);
        }
        train.sort_unstable();
        test.sort_unstable();
        let pick = |idx: &[usize], split| Dataset {
            features: self.features.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
            split,
        };
        Ok((pick(&train, Split::Train), pick(&test, Split::Test)))
    }
}

/// Where class centres are placed on the unit sphere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterLayout {
    /// Independent uniform directions.
    #[default]
    Uniform,
    /// Centres in antipodal pairs `c, −c`, so half of all off-class pairs are
    /// strongly anti-correlated.
    Antipodal,
}

impl std::str::FromStr for CenterLayout {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "uniform" => Ok(Self::Uniform),
            "antipodal" => Ok(Self::Antipodal),
            other => Err(format!("unknown centre layout `{other}`")),
        }
    }
}

impl std::fmt::Display for CenterLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Uniform => "uniform",
            Self::Antipodal => "antipodal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub per_class: usize,
    pub dim: usize,
    /// RMS radius of the per-class isotropic noise (per-coordinate standard
    /// deviation is `spread / √dim`).
    pub spread: f64,
    pub layout: CenterLayout,
    pub seed: u64,
}

fn unit_gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let n = crate::matrix::norm(&v);
        if n > 1e-12 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

/// Gaussian blobs around unit-sphere centres, samples ordered class by class.
pub fn generate(spec: &SyntheticSpec) -> Result<Dataset> {
    if spec.num_classes < 2 {
        return Err(Error::InvalidParameter {
            name: "num_classes",
            reason: "need at least two classes".into(),
        });
    }
    if spec.dim < 2 {
        return Err(Error::InvalidParameter {
            name: "dim",
            reason: "need at least two input dimensions".into(),
        });
    }
    if !(spec.spread >= 0.0) {
        return Err(Error::InvalidParameter {
            name: "spread",
            reason: "must be non-negative".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut centers: Vec<Vec<f64>> = Vec::with_capacity(spec.num_classes);
    while centers.len() < spec.num_classes {
        let c = unit_gaussian(&mut rng, spec.dim);
        if spec.layout == CenterLayout::Antipodal && centers.len() + 1 < spec.num_classes {
            centers.push(c.iter().map(|v| -v).collect());
        }
        centers.push(c);
    }
    let sigma = spec.spread / (spec.dim as f64).sqrt();
    let n = spec.num_classes * spec.per_class;
    let mut features = Matrix::zeros(n, spec.dim);
    let mut labels = Vec::with_capacity(n);
    for (class, center) in centers.iter().enumerate() {
        for s in 0..spec.per_class {
            let row = features.row_mut(class * spec.per_class + s);
            for (o, &c) in row.iter_mut().zip(center) {
                let noise: f64 = rng.sample(StandardNormal);
                *o = c + sigma * noise;
            }
            labels.push(class);
        }
    }
    Dataset::new(features, labels, Split::Train).map(|mut d| {
        d.num_classes = spec.num_classes;
        d
    })
}

/// Uniform-layout blobs; see [`generate`].
pub fn generate_synthetic(num_classes: usize, per_class: usize, dim: usize, spread: f64, seed: u64) -> Result<Dataset> {
    generate(&SyntheticSpec {
        num_classes,
        per_class,
        dim,
        spread,
        layout: CenterLayout::Uniform,
        seed,
    })
}

/// `classes × samples_per_class` mini-batch layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BatchSpec {
    pub classes_per_batch: usize,
    pub samples_per_class: usize,
    pub anchors_per_class: usize,
}

impl Default for BatchSpec {
    fn default() -> Self {
        Self {
            classes_per_batch: 4,
            samples_per_class: 9,
            anchors_per_class: 1,
        }
    }
}

impl BatchSpec {
    pub fn batch_size(&self) -> usize {
        self.classes_per_batch * self.samples_per_class
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes_per_batch < 1 || self.samples_per_class < 1 {
            return Err(Error::InvalidBatchSpec("batch must be non-empty".into()));
        }
        if self.anchors_per_class >= self.samples_per_class {
            return Err(Error::InvalidBatchSpec(format!(
                "anchors per class ({}) must be fewer than samples per class ({})",
                self.anchors_per_class, self.samples_per_class
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MiniBatch {
    pub indices: Vec<usize>,
    pub anchors: Vec<bool>,
}

/// Draws `c` distinct classes, then `k` distinct samples of each; the first
/// `a` samples drawn per class are anchors.
pub fn sample_batch(data: &Dataset, spec: &BatchSpec, rng: &mut ChaCha8Rng) -> Result<MiniBatch> {
    spec.validate()?;
    let members = data.class_members();
    let populated: Vec<usize> = (0..members.len()).filter(|&c| !members[c].is_empty()).collect();
    if spec.classes_per_batch > populated.len() {
        return Err(Error::InvalidBatchSpec(format!(
            "{} classes per batch but only {} classes available",
            spec.classes_per_batch,
            populated.len()
        )));
    }
    let classes: Vec<usize> = populated
        .choose_multiple(rng, spec.classes_per_batch)
        .copied()
        .collect();
    let mut indices = Vec::with_capacity(spec.batch_size());
    let mut anchors = Vec::with_capacity(spec.batch_size());
    for class in classes {
        let pool = &members[class];
        if pool.len() < spec.samples_per_class {
            return Err(Error::InsufficientSamples {
                class,
                needed: spec.samples_per_class,
                available: pool.len(),
            });
        }
        for (s, &i) in pool.choose_multiple(rng, spec.samples_per_class).enumerate() {
            indices.push(i);
            anchors.push(s < spec.anchors_per_class);
        }
    }
    Ok(MiniBatch { indices, anchors })
}
