use thiserror::Error;

/// Shape, contract and validation failures from tensors and the tape.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("shape {shape:?} needs {} elements, got {len}", shape.iter().product::<usize>())]
    DataLength { shape: Vec<usize>, len: usize },
    #[error("ragged matrix rows: expected {expected} columns, found {found}")]
    RaggedRows { expected: usize, found: usize },
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("{op}: expected rank {expected}, got shape {shape:?}")]
    RankMismatch {
        op: &'static str,
        expected: usize,
        shape: Vec<usize>,
    },
    #[error("label {label} at row {row} is outside [0, {num_classes})")]
    InvalidLabel {
        row: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("{op}: {found} labels for {rows} rows")]
    LabelCount {
        op: &'static str,
        rows: usize,
        found: usize,
    },
    #[error("backward needs a scalar output, got shape {shape:?}")]
    NonScalarOutput { shape: Vec<usize> },
    #[error("variable {0} does not belong to this tape")]
    UnknownVar(usize),
}

/// Failure reported by a gradient oracle.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("loss evaluated to a non-finite value ({0})")]
    NonFiniteLoss(f64),
    #[error("{0}")]
    Failed(String),
}

/// Gradient centralization failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum GcError {
    #[error("tensor of rank {rank} is below the centralization minimum rank {min_rank}")]
    RankBelowMinimum { rank: usize, min_rank: usize },
    #[error("column axis {axis} is invalid for a rank-{rank} tensor")]
    InvalidAxis { axis: usize, rank: usize },
    #[error("min_rank must be at least 1")]
    InvalidMinRank,
    #[error("non-finite gradient value at flat index {index}")]
    NonFinite { index: usize },
    #[error("parameter `{name}`: {source}")]
    InTensor {
        name: String,
        #[source]
        source: Box<GcError>,
    },
}

/// Optimizer configuration and step failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum OptimError {
    #[error("invalid optimizer config: {0}")]
    InvalidConfig(String),
    #[error("only the 2-norm is supported for perturbations, got p = {0}")]
    UnsupportedNormOrder(u32),
    #[error("non-finite gradient for parameter `{name}`; step aborted")]
    NonFiniteGradient { name: String },
    #[error("no gradient supplied for parameter `{name}`")]
    MissingGradient { name: String },
    #[error("gradient for unknown parameter `{name}`")]
    UnknownParameter { name: String },
    #[error(transparent)]
    Shape(#[from] EngineError),
    #[error("gradient oracle failed: {0}")]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Centralization(#[from] GcError),
}

/// Dataset generation, ingestion and batching failures.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid dataset request: {0}")]
    Invalid(String),
    #[error("label column `{name}` not found; available columns: {available:?}")]
    MissingColumn { name: String, available: Vec<String> },
    #[error("row {row}, column {column}: {message}")]
    Cell {
        row: usize,
        column: usize,
        message: String,
    },
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Sharpness, landscape and bound evaluation failures.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnalysisError {
    #[error("invalid analysis request: {0}")]
    Invalid(String),
    #[error("oracle failed: {0}")]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error("could not draw two non-parallel directions after reseeding")]
    DegenerateDirections,
    #[error("bound radicand is negative ({0}); check constant_term")]
    NegativeRadicand(f64),
}
