use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the noisy-label pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },

    #[error("{0} is empty")]
    Empty(String),

    #[error("no label meets min_count {0}")]
    NoLabelMeetsMinCount(usize),

    #[error("label {label:?} has {count} item(s); stratified split needs at least 2")]
    TooFewForSplit { label: String, count: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("item {0} has no embedding")]
    MissingEmbedding(u64),

    #[error(
        "training diverged at epoch {epoch}, step {step}: loss is not finite \
         (learning_rate={learning_rate}, init_bound_hidden={init_bound_hidden:.3e}, \
         init_bound_output={init_bound_output:.3e})"
    )]
    Diverged {
        epoch: usize,
        step: u64,
        learning_rate: f64,
        init_bound_hidden: f64,
        init_bound_output: f64,
    },

    #[error("label space mismatch: expected {expected} classes, found {found}")]
    LabelSpaceMismatch { expected: usize, found: usize },

    #[error("target noise rate {target:.4} unreachable: attainable range is [{min:.4}, {max:.4}]")]
    UnattainableRate { target: f64, min: f64, max: f64 },

    #[error("item {id} is not clean: observed label differs from true label")]
    NotClean { id: u64 },

    #[error("duplicate result key {0}")]
    DuplicateKey(String),

    #[error("model blob: {0}")]
    ModelFormat(String),

    #[error("config: {0}")]
    Config(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),

    #[error("stage {stage} failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Self {
        Error::Stage {
            stage,
            source: Box::new(self),
        }
    }
}
