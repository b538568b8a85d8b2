use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("labels contain a single class")]
    SingleClass,
    #[error("labels are required for this operation")]
    MissingLabels,
    #[error("feature count mismatch: expected {expected}, got {got}")]
    FeatureMismatch { expected: usize, got: usize },
    #[error("non-finite score at index {0}")]
    NonFinite(usize),
    #[error("duplicate key `{key}` in {dataset}")]
    DuplicateKey { dataset: &'static str, key: String },
    #[error("need at least {needed} distinct parcels, found {found}")]
    TooFewGroups { needed: usize, found: usize },
    #[error("no propensity for parcel `{0}`")]
    MissingPropensity(String),
    #[error("no positive labels")]
    NoPositives,
    #[error("invalid record: {0}")]
    InvalidRecord(String),
    #[error("malformed model: {0}")]
    MalformedModel(String),
}
