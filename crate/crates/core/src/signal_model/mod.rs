//! Attribute schema, per-sample and per-individual records, and ingestion of
//! line-delimited signal manifests produced by external extractors.

pub mod builtin;
mod dataset;
mod descriptor;
mod manifest;
mod mapping;
mod schema;
mod value;

pub use dataset::{Dataset, IndividualRecord, SampleRecord};
pub use descriptor::{
    AttributeDescriptor, DerivationRule, Group, Kind, KindViolation, Scope, Source,
    VECTOR_SUM_TOLERANCE,
};
pub use manifest::{
    ingest_manifest, EntryError, EntryErrorKind, IngestOutcome, IngestReport, Ingestor,
    SignalManifestEntry, Strictness,
};
pub use mapping::MacroMapping;
pub use schema::{Schema, ThresholdConfig, DEFAULT_THRESHOLD};
pub use value::{BoxRect, ImageDims, Value};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SchemaError {
    #[error("cannot parse schema configuration: {0}")]
    Parse(String),
    #[error("{0}")]
    Io(String),
    #[error("attribute {0:?} is declared more than once")]
    DuplicateName(String),
    #[error("attribute {attribute:?}: unknown kind {kind:?}")]
    UnknownKind { attribute: String, kind: String },
    #[error("unknown attribute group {0:?}")]
    UnknownGroup(String),
    #[error("unknown scope {0:?}")]
    UnknownScope(String),
    #[error("unknown source {0:?}")]
    UnknownSource(String),
    #[error("attribute {attribute:?}: unknown class preset {preset:?}")]
    UnknownPreset { attribute: String, preset: String },
    #[error("attribute {0:?} needs group, scope and kind")]
    Incomplete(String),
    #[error("attribute {attribute:?}: derivation rule cannot be resolved: {reason}")]
    MissingRule { attribute: String, reason: String },
    #[error("attribute {attribute:?}: {reason}")]
    RuleMismatch { attribute: String, reason: String },
    #[error("derivation cycle through attribute {0:?}")]
    Cycle(String),
    #[error("probability vector {0:?} needs at least 2 classes")]
    VectorClasses(String),
    #[error("mapping {mapping:?}: {reason}")]
    Mapping { mapping: String, reason: String },
    #[error("threshold for {attribute:?} is {value}, must lie in [0, 1]")]
    Threshold { attribute: String, value: f64 },
    #[error("{0:?} is not a probability attribute and takes no threshold")]
    NotThresholdable(String),
}
