use alloc::string::String;
use alloc::vec::Vec;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("duplicate (article, week) rows at data rows {rows:?}")]
    DuplicateRows { rows: Vec<usize> },
    #[error("negative demand {value} at data row {row}")]
    NegativeDemand { row: usize, value: f64 },
    #[error("non-finite demand at data row {row}")]
    NonFiniteDemand { row: usize },
    #[error("articles missing from static features: {ids:?}")]
    MissingStatic { ids: Vec<String> },
    #[error("timeline is not uniformly weekly: {0}")]
    Timeline(String),
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("invalid split: {weeks} weeks cannot hold {test} test and {val} validation weeks")]
    Split { weeks: usize, test: usize, val: usize },
    #[error("non-finite feature value in row {row}")]
    NonFiniteFeature { row: usize },
    #[error("shape mismatch: expected {expected:?}, got {got:?}")]
    Shape {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("non-finite input in channel `{channel}` at step {step}")]
    NonFiniteInput { channel: &'static str, step: usize },
    #[error("invalid Student-t parameters: {0}")]
    StudentT(String),
    #[error("week {week} out of range (need history from week {needed}, have {len} weeks)")]
    WeekOutOfRange { week: usize, needed: isize, len: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("non-finite loss in epoch {epoch}, batch {batch}")]
    Divergence { epoch: usize, batch: usize },
    #[error("schema hash mismatch: {expected} vs {got}")]
    SchemaMismatch { expected: String, got: String },
    #[error("report groups differ: {0}")]
    GroupMismatch(String),
}
