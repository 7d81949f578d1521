use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the pipeline.
#[derive(Error, Debug)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{rule}, graph {graph}")]
    InvalidGraph { graph: usize, rule: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("heterogeneous feature widths: expected d_v={expected_dv}, d_e={expected_de}, got d_v={dv}, d_e={de}")]
    FeatureWidth {
        expected_dv: usize,
        expected_de: usize,
        dv: usize,
        de: usize,
    },

    #[error("not a permutation: {0}")]
    NotAPermutation(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("computation output must be scalar, got shape {rows}x{cols}")]
    NonScalar { rows: usize, cols: usize },

    #[error("non-finite value produced by `{op}` during {phase} pass")]
    NonFinite { op: &'static str, phase: &'static str },

    #[error("unknown parameter `{0}`")]
    MissingParam(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("degenerate samples: {0}")]
    DegenerateSamples(String),

    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NanLoss { epoch: usize, batch: usize },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
