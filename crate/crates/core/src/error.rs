use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("{op}: shape mismatch {left:?} vs {right:?}")]
    ShapeMismatch {
        op: &'static str,
        left: [usize; 2],
        right: [usize; 2],
    },
    #[error("{op}: index {index} out of bounds for length {len}")]
    IndexOutOfBounds {
        op: &'static str,
        index: usize,
        len: usize,
    },
    #[error("tensor data of length {len} does not fit shape {shape:?}")]
    DataLength { shape: [usize; 2], len: usize },
    #[error("backward needs a scalar loss, got shape {0:?}")]
    NonScalarLoss([usize; 2]),
    #[error("no gradient for parameter `{0}`")]
    MissingGradient(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    ParseNumber {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}, column `{column}`: unknown category `{value}` (known: {known:?})")]
    UnknownCategory {
        row: usize,
        column: String,
        value: String,
        known: Vec<String>,
    },
    #[error("header mismatch: expected {expected:?}, found {found:?}")]
    HeaderMismatch {
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("row {row} has {found} cells, expected {expected}")]
    RowWidth {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("column `{0}` has no observed values")]
    EmptyColumn(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot calibrate logistic mask to missing ratio {0}")]
    Calibration(f64),
    #[error("need at least {needed} observed values, found {found}")]
    TooFewValues { needed: usize, found: usize },

    #[error("no observed cells to supervise")]
    NoObservedCells,
    #[error("training diverged at epoch {0}: loss is not finite")]
    Diverged(usize),
    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("evaluation set is empty")]
    EmptyEvaluation,
    #[error("silhouette needs at least two non-empty clusters")]
    SingleCluster,
}
