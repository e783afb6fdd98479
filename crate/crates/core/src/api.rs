//! Wire types of the query service and the library-level service they are
//! answered by. The HTTP server only routes, caches and serializes.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::aggregation::{
    boxplot_summary, cooccurrence, distribution, npmi, privacy_floor, summary_table, AggregateError, BoxplotQuery,
    BoxplotSummary, CooccurrenceMatrix, CountCell, Distribution, DistributionQuery, Floored, NpmiMatrix, PairQuery,
    SummaryRow, DEFAULT_K,
};
use crate::patches::{skin_patches, PatchError, PatchPage, PatchQuery, DEFAULT_PAGE_SIZE};
use crate::signal_model::{AttributeDescriptor, Dataset};

pub const API_VERSION: &str = "sigaudit-api/1";
pub const API_PREFIX: &str = "/api/v1";

pub mod routes {
    pub const INFO: &str = "/api/v1/info";
    pub const ATTRIBUTES: &str = "/api/v1/attributes";
    pub const SUMMARY: &str = "/api/v1/summary";
    pub const DISTRIBUTION: &str = "/api/v1/distribution";
    pub const BOXPLOT: &str = "/api/v1/boxplot";
    pub const COOCCURRENCE: &str = "/api/v1/cooccurrence";
    pub const NPMI: &str = "/api/v1/npmi";
    /// Registered only in trusted mode.
    pub const PATCHES: &str = "/api/v1/patches";
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetInfo {
    pub api: String,
    pub name: String,
    pub samples: CountCell,
    pub individuals: CountCell,
    pub dataset_digest: String,
    pub schema_digest: String,
    pub k: u64,
    pub trusted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeInfo {
    #[serde(flatten)]
    pub descriptor: AttributeDescriptor,
    /// Default threshold, for probability attributes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threshold: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributesResponse {
    pub dataset: DatasetInfo,
    pub attributes: Vec<AttributeInfo>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryQuery {
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryResponse {
    pub query: SummaryQuery,
    pub k: u64,
    pub suppressed_cells: u64,
    pub rows: Vec<SummaryRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorCode {
    UnknownAttribute,
    InvalidQuery,
    NotFound,
    Internal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorBody {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub valid_attributes: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ErrorResponse {
    pub error: ErrorBody,
}

impl ErrorBody {
    pub fn new(code: ErrorCode, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            valid_attributes: None,
        }
    }

    /// HTTP status for the code.
    pub fn status(&self) -> u16 {
        match self.code {
            ErrorCode::UnknownAttribute | ErrorCode::InvalidQuery => 400,
            ErrorCode::NotFound => 404,
            ErrorCode::Internal => 500,
        }
    }
}

impl std::fmt::Display for ErrorBody {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for ErrorBody {}

impl From<AggregateError> for ErrorBody {
    fn from(e: AggregateError) -> Self {
        match e {
            AggregateError::UnknownAttribute { ref valid, .. } => Self {
                code: ErrorCode::UnknownAttribute,
                valid_attributes: Some(valid.clone()),
                message: e.to_string(),
            },
            AggregateError::Derive(_) => Self::new(ErrorCode::Internal, e.to_string()),
            other => Self::new(ErrorCode::InvalidQuery, other.to_string()),
        }
    }
}

impl From<PatchError> for ErrorBody {
    fn from(e: PatchError) -> Self {
        match e {
            PatchError::Aggregate(a) => a.into(),
            other => Self::new(ErrorCode::InvalidQuery, other.to_string()),
        }
    }
}

/// Hex sha256 of the canonical JSON of `query`, prefixed by the endpoint.
fn floored(n: u64, k: u64) -> CountCell {
    let mut c = CountCell::Count(n);
    c.floor(k);
    c
}

pub fn query_digest<Q: Serialize>(endpoint: &str, query: &Q) -> String {
    let mut h = Sha256::new();
    h.update(endpoint.as_bytes());
    h.update([0]);
    h.update(serde_json::to_vec(query).expect("query serializes"));
    hex::encode(h.finalize())
}

/// Parses a request body, mapping failures to an `invalid_query` error.
pub fn parse_query<Q: DeserializeOwned>(body: &[u8]) -> Result<Q, ErrorBody> {
    serde_json::from_slice(body).map_err(|e| ErrorBody::new(ErrorCode::InvalidQuery, format!("malformed query: {e}")))
}

#[derive(Debug, Clone)]
pub struct PatchSource {
    pub image_root: PathBuf,
    pub page_size: usize,
}

impl PatchSource {
    pub fn new(image_root: impl Into<PathBuf>) -> Self {
        Self {
            image_root: image_root.into(),
            page_size: DEFAULT_PAGE_SIZE,
        }
    }
}

/// Answers every endpoint from an ingested dataset, applying the small-cell
/// floor to every aggregate.
#[derive(Debug, Clone)]
pub struct QueryService {
    dataset: Arc<Dataset>,
    info: DatasetInfo,
    patches: Option<PatchSource>,
}

impl QueryService {
    pub fn new(dataset: Arc<Dataset>, name: Option<String>, k: u64, patches: Option<PatchSource>) -> Result<Self, ErrorBody> {
        if k == 0 {
            return Err(ErrorBody::new(ErrorCode::InvalidQuery, "k must be at least 1"));
        }
        if patches.as_ref().is_some_and(|p| p.page_size == 0) {
            return Err(ErrorBody::new(ErrorCode::InvalidQuery, "page size must be positive"));
        }
        let schema = dataset.schema();
        let info = DatasetInfo {
            api: API_VERSION.into(),
            name: name.unwrap_or_else(|| schema.name().to_string()),
            samples: floored(dataset.len() as u64, k),
            individuals: floored(dataset.individual_count() as u64, k),
            dataset_digest: dataset.digest(),
            schema_digest: schema.digest(),
            k,
            trusted: patches.is_some(),
        };
        Ok(Self { dataset, info, patches })
    }

    pub fn with_defaults(dataset: Arc<Dataset>) -> Self {
        Self::new(dataset, None, DEFAULT_K, None).expect("defaults are valid")
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn info(&self) -> &DatasetInfo {
        &self.info
    }

    pub fn k(&self) -> u64 {
        self.info.k
    }

    pub fn trusted(&self) -> bool {
        self.patches.is_some()
    }

    pub fn attributes(&self) -> AttributesResponse {
        let schema = self.dataset.schema();
        let thresholds = schema.thresholds();
        AttributesResponse {
            dataset: self.info.clone(),
            attributes: schema
                .attributes()
                .iter()
                .map(|d| AttributeInfo {
                    threshold: (d.kind == crate::signal_model::Kind::Probability).then(|| thresholds.get(&d.name)),
                    descriptor: d.clone(),
                })
                .collect(),
        }
    }

    pub fn summary(&self, query: &SummaryQuery) -> Result<SummaryResponse, ErrorBody> {
        let mut rows = summary_table(&self.dataset, &query.thresholds)?;
        let suppressed_cells = rows.suppress_below(self.k());
        Ok(SummaryResponse {
            query: query.clone(),
            k: self.k(),
            suppressed_cells,
            rows,
        })
    }

    pub fn distribution(&self, query: &DistributionQuery) -> Result<Distribution, ErrorBody> {
        Ok(privacy_floor(distribution(&self.dataset, query)?, self.k())?)
    }

    pub fn boxplot(&self, query: &BoxplotQuery) -> Result<BoxplotSummary, ErrorBody> {
        Ok(privacy_floor(boxplot_summary(&self.dataset, query)?, self.k())?)
    }

    pub fn cooccurrence(&self, query: &PairQuery) -> Result<CooccurrenceMatrix, ErrorBody> {
        Ok(privacy_floor(cooccurrence(&self.dataset, query)?, self.k())?)
    }

    pub fn npmi(&self, query: &PairQuery) -> Result<NpmiMatrix, ErrorBody> {
        Ok(privacy_floor(npmi(&self.dataset, query)?, self.k())?)
    }

    /// Face crops for one bin; `not_found` outside trusted mode.
    pub fn patches(&self, query: &PatchQuery) -> Result<PatchPage, ErrorBody> {
        let src = self
            .patches
            .as_ref()
            .ok_or_else(|| ErrorBody::new(ErrorCode::NotFound, "no such endpoint"))?;
        Ok(skin_patches(&self.dataset, &src.image_root, query, src.page_size)?)
    }
}
