//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Two consecutive layers do not compose shape-wise.
    #[error("layer {layer} output {output:?} != layer {next} input {input:?}")]
    LayerCompose {
        /// 1-based index of the producing layer.
        layer: usize,
        output: Vec<usize>,
        /// 1-based index of the consuming layer.
        next: usize,
        input: Vec<usize>,
    },

    #[error("{what}: expected shape {expected:?}, got {got:?}")]
    ShapeMismatch {
        what: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("tensor values must be finite: {0}")]
    NonFinite(String),

    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("non-finite loss for batch example {example}")]
    NonFiniteLoss { example: usize },

    #[error("network has no prunable layers")]
    NoPrunableLayers,

    #[error("network has no mask set; apply one before masked fine-tuning")]
    MissingMask,

    #[error("mask shape {mask:?} does not match weights {weights:?} at layer {layer}")]
    MaskShape {
        layer: usize,
        mask: Vec<usize>,
        weights: Vec<usize>,
    },

    #[error("output arity mismatch: network has {net} outputs, dataset has {data} classes")]
    ArityMismatch { net: usize, data: usize },

    #[error("teacher network has no parameters")]
    ZeroParamTeacher,

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("{path}: unexpected magic 0x{got:08x}, expected 0x{expected:08x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        got: u32,
    },

    #[error("{path}: truncated payload ({detail})")]
    Truncated { path: PathBuf, detail: String },

    #[error("image count {images} does not match label count {labels}")]
    CountMismatch { images: usize, labels: usize },

    #[error("{path}: length {len} is not a multiple of the {record}-byte record size")]
    BadRecordLength {
        path: PathBuf,
        len: u64,
        record: usize,
    },

    #[error("{path}: contains no records")]
    NoRecords { path: PathBuf },

    #[error("label {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("model file {path}: {detail}")]
    ModelFormat { path: PathBuf, detail: String },

    #[error("unknown strategy {0:?}; expected one of: random, class_uniform, class_blind")]
    UnknownStrategy(String),

    #[error("unknown curve field {0:?}; expected one of: accuracy, effective_params, cascaded_extra, total_compression, wall_ms")]
    UnknownField(String),

    #[error("strategy {0:?} not present in report records")]
    StrategyAbsent(String),

    #[error("report bundle has no records")]
    EmptyBundle,

    #[error("bad architecture string: {0}")]
    BadArch(String),

    #[error("bad record at line {line}: {detail}")]
    BadRecord { line: usize, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
