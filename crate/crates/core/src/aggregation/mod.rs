//! Statistics over an ingested dataset: quantization, distributions with up
//! to three facets, boxplots and nutrition-label summaries, co-occurrence
//! with expected counts and significance, nPMI, and the small-cell privacy
//! floor. Every function is a pure read of an immutable [`Dataset`].
//!
//! [`Dataset`]: crate::signal_model::Dataset

mod cells;
mod cooccurrence;
mod distribution;
mod privacy;
mod quantize;
mod query;
mod rows;
mod stats;

pub use cells::{CountCell, Metric, PrivacyMeta};
pub use cooccurrence::{
    cooccurrence, expected_counts, normalize, npmi, npmi_table, significance_mask, CooccurrenceMatrix,
    NpmiMatrix, MIN_EXPECTED,
};
pub use distribution::{distribution, Distribution, DistributionCell, MAX_FACETS};
pub use privacy::{privacy_floor, Floored, DEFAULT_K};
pub use quantize::{quantize, QuantKind, QuantizationSpec, N_BINS, Z_95};
pub use query::{BoxplotQuery, DistributionQuery, Filter, Normalization, PairQuery, Predicate, Unit};
pub use rows::{resolve_thresholds, Axis, AxisKind, Rows};
pub use stats::{
    boxplot_summary, five_number, quantile, summary_stats, summary_table, BoxplotSummary, CategoricalSummary,
    ClassCount, FiveNumber, NumericSummary, SummaryRow, TOP_CLASSES,
};

use crate::derivation::DeriveError;
use crate::signal_model::Dataset;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AggregateError {
    #[error("unknown attribute {name:?}; valid attributes: {}", valid.join(", "))]
    UnknownAttribute { name: String, valid: Vec<String> },
    #[error("{0} facets requested, at most 3 are allowed")]
    TooManyFacets(usize),
    #[error("attribute {attribute:?} of kind {kind} cannot be binned")]
    NotQuantizable { attribute: String, kind: &'static str },
    #[error("attribute {0:?} is not numeric")]
    NotNumeric(String),
    #[error("attribute {0:?} has no values after filtering")]
    Empty(String),
    #[error("no values to quantize")]
    EmptyInput,
    #[error("value {0} is not finite")]
    NotFinite(f64),
    #[error("value {0} is not a probability")]
    NotProbability(f64),
    #[error("attribute {0:?} is not a probability and takes no threshold")]
    NotThresholdable(String),
    #[error("{0}")]
    Threshold(String),
    #[error("filter on {attribute:?}: {reason}")]
    BadFilter { attribute: String, reason: String },
    #[error("privacy floor k must be at least 1")]
    InvalidK,
    #[error(transparent)]
    Derive(#[from] DeriveError),
}

impl AggregateError {
    pub(crate) fn unknown(name: &str, dataset: &Dataset) -> Self {
        AggregateError::UnknownAttribute {
            name: name.to_string(),
            valid: dataset.schema().attribute_names(),
        }
    }
}
