use std::path::PathBuf;

use thiserror::Error;

/// Failures raised while loading or validating a graph bundle.
#[derive(Debug, Error)]
pub enum BundleError {
    #[error("missing bundle file {0}")]
    MissingFile(PathBuf),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed meta.json: {0}")]
    Meta(String),
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("dimension mismatch in {file}: expected {expected}, found {found}")]
    DimensionMismatch {
        file: String,
        expected: String,
        found: String,
    },
    #[error("{file}:{line}: node id {id} out of range for n = {n}")]
    NodeOutOfRange {
        file: String,
        line: usize,
        id: usize,
        n: usize,
    },
    #[error("labels.tsv:{line}: label {label} out of range for k = {k}")]
    LabelOutOfRange { line: usize, label: usize, k: usize },
    #[error("non-finite feature value at row {row}, column {col}")]
    NonFiniteFeature { row: usize, col: usize },
    #[error("invalid bundle: {0}")]
    Invalid(String),
}

/// Failures raised by the differentiable matrix core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },
    #[error("non-finite value produced by {0}")]
    NonFinite(&'static str),
    #[error("variable does not belong to this tape")]
    ForeignVar,
    #[error("variable {0} is not a trainable leaf")]
    NotTrainable(usize),
    #[error("loss must be a 1x1 matrix, got {0}x{1}")]
    NonScalarLoss(usize, usize),
    #[error("row {0} has zero norm and cannot be normalized")]
    ZeroRow(usize),
    #[error("index {index} out of range for {rows} rows")]
    IndexOutOfRange { index: usize, rows: usize },
}

/// Errors from the learning pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("degenerate embedding: {0}")]
    DegenerateEmbedding(String),
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(&'static str),
    #[error("augmentation removed every edge; lower aug.p_e (currently {p_e})")]
    EmptyAugmentedGraph { p_e: f64 },
    #[error("epoch {epoch}: {source}")]
    Epoch {
        epoch: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("epoch {epoch}: non-finite loss {value}")]
    NonFiniteLoss { epoch: usize, value: f64 },
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// True when the failure is numerical rather than an input problem.
    pub fn is_numerical(&self) -> bool {
        match self {
            Error::Diff(_)
            | Error::DegenerateEmbedding(_)
            | Error::NonFiniteGradient(_)
            | Error::NonFiniteLoss { .. }
            | Error::EmptyAugmentedGraph { .. } => true,
            Error::Epoch { source, .. } => source.is_numerical(),
            _ => false,
        }
    }

    pub(crate) fn in_epoch(self, epoch: usize) -> Error {
        match self {
            e @ (Error::Epoch { .. } | Error::NonFiniteLoss { .. }) => e,
            e => Error::Epoch {
                epoch,
                source: Box::new(e),
            },
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
