use thiserror::Error;

/// Errors raised by the numerics, the evaluation pipeline and the data layer.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("empty logits")]
    EmptyLogits,

    #[error("label {label} outside class range [0, {classes})")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("label {label} does not belong to task {task}")]
    TaskLabelMismatch { label: usize, task: usize },

    #[error("no past tasks at task {0}")]
    NoPastTasks(usize),

    #[error("cannot expand head past {num_tasks} tasks")]
    ExpansionLimit { num_tasks: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("invalid {field}: {reason}")]
    Invalid { field: &'static str, reason: String },

    #[error("unknown ablation variant key `{0}`")]
    UnknownVariantKey(String),

    #[error("bad magic: expected EMB1")]
    BadMagic,

    #[error("unsupported EMB1 version {0}")]
    UnsupportedVersion(u16),

    #[error("truncated file: needed {needed} bytes at offset {offset}, {available} available")]
    Truncated {
        offset: usize,
        needed: usize,
        available: usize,
    },

    #[error("{0} trailing bytes after last record")]
    TrailingBytes(usize),

    #[error("no examples")]
    NoExamples,

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::Invalid {
        field,
        reason: reason.into(),
    }
}
