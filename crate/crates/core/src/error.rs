use thiserror::Error;

/// Errors raised by the group-loss pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("row {0} has (near) zero variance; Pearson similarity is undefined")]
    ZeroVarianceRow(usize),

    #[error("temperature must be positive, got {0}")]
    NonPositiveTemperature(f64),

    #[error("label {label} of row {row} is outside [0, {classes})")]
    LabelOutOfRange { row: usize, label: usize, classes: usize },

    #[error("row {row} has a vanishing support normaliser at refinement step {step}")]
    DegenerateSupport { row: usize, step: usize },

    #[error("every row is an anchor; the loss has no terms")]
    AllAnchors,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("not enough samples in class {class}: need {needed}, have {available}")]
    InsufficientSamples {
        class: usize,
        needed: usize,
        available: usize,
    },

    #[error("invalid batch spec: {0}")]
    InvalidBatchSpec(String),

    #[error("cannot normalise a zero vector")]
    ZeroVector,

    #[error("transform is not an involution on the sampled input")]
    NotInvolution,

    #[error("cannot concatenate an empty list of embeddings")]
    EmptyList,

    #[error("k = {k} exceeds the available {available} items")]
    KTooLarge { k: usize, available: usize },

    #[error("partitions have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("query {0} has no relevant gallery items")]
    NoRelevantItems(usize),

    #[error("invalid parameter {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("training failed at epoch {epoch}, step {step}: {source}")]
    Training {
        epoch: usize,
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("invalid value for `{key}`: {reason}")]
    InvalidValue { key: String, reason: String },

    #[error("missing required key `{0}`")]
    MissingRequired(String),

    #[error("bad magic bytes in feature file")]
    BadMagic,

    #[error("unsupported feature file version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated payload at byte offset {offset} (expected {expected} bytes)")]
    TruncatedPayload { offset: u64, expected: u64 },

    #[error("malformed CSV row at line {line}: {reason}")]
    MalformedCsvRow { line: usize, reason: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
