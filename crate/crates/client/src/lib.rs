//! Typed client for the query service. Each method mirrors one route and
//! returns the library type the server serialized.

use reqwest::StatusCode;
use serde::de::DeserializeOwned;
use serde::Serialize;

use sigaudit_core::aggregation::{
    BoxplotQuery, BoxplotSummary, CooccurrenceMatrix, Distribution, DistributionQuery, NpmiMatrix, PairQuery,
};
use sigaudit_core::api::{routes, AttributesResponse, DatasetInfo, ErrorBody, ErrorResponse, SummaryQuery, SummaryResponse};
use sigaudit_core::patches::{PatchPage, PatchQuery};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Transport(#[from] reqwest::Error),
    #[error("server answered {status}: {body}")]
    Api { status: u16, body: ErrorBody },
    #[error("cannot decode response ({status}): {message}")]
    Decode { status: u16, message: String },
}

impl ClientError {
    /// The structured error, when the server sent one.
    pub fn api_error(&self) -> Option<&ErrorBody> {
        match self {
            ClientError::Api { body, .. } => Some(body),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is the server root, e.g. `http://127.0.0.1:8080`.
    pub fn new(base: impl Into<String>) -> Self {
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    async fn decode<R: DeserializeOwned>(resp: reqwest::Response) -> Result<R, ClientError> {
        let status = resp.status();
        let bytes = resp.bytes().await?;
        if status == StatusCode::OK {
            return serde_json::from_slice(&bytes).map_err(|e| ClientError::Decode {
                status: status.as_u16(),
                message: e.to_string(),
            });
        }
        match serde_json::from_slice::<ErrorResponse>(&bytes) {
            Ok(e) => Err(ClientError::Api {
                status: status.as_u16(),
                body: e.error,
            }),
            Err(e) => Err(ClientError::Decode {
                status: status.as_u16(),
                message: format!("{e}: {}", String::from_utf8_lossy(&bytes)),
            }),
        }
    }

    async fn get<R: DeserializeOwned>(&self, route: &str) -> Result<R, ClientError> {
        Self::decode(self.http.get(format!("{}{route}", self.base)).send().await?).await
    }

    async fn post<Q: Serialize, R: DeserializeOwned>(&self, route: &str, q: &Q) -> Result<R, ClientError> {
        Self::decode(self.http.post(format!("{}{route}", self.base)).json(q).send().await?).await
    }

    pub async fn info(&self) -> Result<DatasetInfo, ClientError> {
        self.get(routes::INFO).await
    }

    pub async fn attributes(&self) -> Result<AttributesResponse, ClientError> {
        self.get(routes::ATTRIBUTES).await
    }

    pub async fn summary(&self, q: &SummaryQuery) -> Result<SummaryResponse, ClientError> {
        self.post(routes::SUMMARY, q).await
    }

    pub async fn distribution(&self, q: &DistributionQuery) -> Result<Distribution, ClientError> {
        self.post(routes::DISTRIBUTION, q).await
    }

    pub async fn boxplot(&self, q: &BoxplotQuery) -> Result<BoxplotSummary, ClientError> {
        self.post(routes::BOXPLOT, q).await
    }

    pub async fn cooccurrence(&self, q: &PairQuery) -> Result<CooccurrenceMatrix, ClientError> {
        self.post(routes::COOCCURRENCE, q).await
    }

    pub async fn npmi(&self, q: &PairQuery) -> Result<NpmiMatrix, ClientError> {
        self.post(routes::NPMI, q).await
    }

    pub async fn patches(&self, q: &PatchQuery) -> Result<PatchPage, ClientError> {
        self.post(routes::PATCHES, q).await
    }
}
