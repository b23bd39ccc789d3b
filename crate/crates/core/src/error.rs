use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("grid must be at least 3x3, got {rows}x{cols}")]
    DegenerateGrid { rows: usize, cols: usize },

    #[error("grid {rows}x{cols} needs {expected} labels, got {got}")]
    LabelCount {
        rows: usize,
        cols: usize,
        expected: usize,
        got: usize,
    },

    #[error("duplicate label {0:?}")]
    DuplicateLabel(char),

    #[error("unknown label {0:?}")]
    UnknownLabel(char),

    #[error("node index {index} out of range for {len} nodes")]
    InvalidNode { index: usize, len: usize },

    #[error("action {0} is not admissible in {1} mode")]
    InadmissibleAction(String, String),

    #[error("class index {index} out of range for {n_classes} classes")]
    InvalidClass { index: usize, n_classes: usize },

    #[error("evidence has {got} classes, expected {expected}")]
    EvidenceDimension { expected: usize, got: usize },

    #[error("evidence entries must be finite and nonnegative")]
    InvalidEvidence,

    #[error("distribution sums to {0}, expected 1")]
    Unnormalized(f64),

    #[error("distribution has {got} entries, expected {expected}")]
    DistributionSize { expected: usize, got: usize },

    #[error("cannot normalize: total probability mass is zero")]
    ZeroMass,

    #[error("n-gram order must be at least 1")]
    InvalidOrder,

    #[error("smoothing alpha must be positive and finite, got {0}")]
    InvalidAlpha(f64),

    #[error("prior strength must lie in [0, 1), got {0}")]
    InvalidStrength(f64),

    #[error("word index {0} outside the 10-word session")]
    WordIndex(usize),

    #[error("target accuracy {target} must exceed chance level {chance}")]
    AccuracyAtChance { target: f64, chance: f64 },

    #[error("need at least {0} classes")]
    TooFewClasses(usize),

    #[error("noise scale must be positive and finite, got {0}")]
    InvalidSigma(f64),

    #[error("sample count must be at least 1")]
    NoSamples,

    #[error("t-test needs at least two observations per sample (got {0} and {1})")]
    UndersizedSample(usize, usize),

    #[error("t-test undefined: both samples have zero variance")]
    ZeroVariance,

    #[error("simulation grid is empty")]
    EmptyGrid,

    #[error("run count must be at least 1")]
    NoRuns,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed {what} at line {line}: {msg}")]
    Parse {
        what: &'static str,
        line: usize,
        msg: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
