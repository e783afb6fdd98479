//! Derivation rules that turn raw signals into class, count, spread and area
//! attributes, plus the [`Frame`] that materializes them for a threshold
//! configuration.

mod frame;
mod ops;

pub use frame::{Column, Frame};
pub use ops::{
    classify_argmax, classify_binary, count_instances, map_macro, per_sample_std, relative_area,
    ArgmaxOutcome, BinaryClass, InstanceCounts,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DeriveError {
    #[error("{what} {value} outside [0, 1]")]
    OutOfRange { what: &'static str, value: f64 },
    #[error("empty probability vector")]
    EmptyVector,
    #[error("unknown attribute {0:?}")]
    UnknownAttribute(String),
    #[error("label {label:?} is not mapped by {mapping:?}")]
    Unmapped { label: String, mapping: String },
    #[error("box has a zero side")]
    DegenerateBox,
    #[error("box lies outside the image")]
    BoxOutOfBounds,
    #[error("deriving {attribute:?}: {source}")]
    Attribute {
        attribute: String,
        #[source]
        source: Box<DeriveError>,
    },
}
