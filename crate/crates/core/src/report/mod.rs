//! Report bundles (one structured file per aggregate plus a manifest of
//! generation parameters), their validator, and static SVG charts.

mod bundle;
mod params;
mod render;

pub use bundle::{
    build_report, slug, validate_bundle, Aggregate, DatasetIdentity, FileEntry, FileKind, ReportBundle,
    ReportManifest, ValidationSummary, MANIFEST_FILE, REPORT_FORMAT, SUMMARY_FILE,
};
pub use params::ReportParams;
pub use render::{
    boxplot, cooccurrence_heatmap, histogram, npmi_color, npmi_heatmap, ratio_color, render_chart,
};

use crate::aggregation::AggregateError;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ReportError {
    #[error("invalid report parameters: {0}")]
    Params(String),
    #[error("unknown attribute {name:?}; valid attributes: {}", valid.join(", "))]
    UnknownAttribute { name: String, valid: Vec<String> },
    #[error("distribution of {attribute:?} asks for {facets} facets, at most 3 are allowed")]
    TooManyFacets { attribute: String, facets: usize },
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error("{0}")]
    Io(String),
    #[error("report does not validate:\n  {}", .0.join("\n  "))]
    Invalid(Vec<String>),
    #[error("cannot render a {0}")]
    Unsupported(&'static str),
}
