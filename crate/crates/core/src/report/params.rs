use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::ReportError;
use crate::aggregation::{BoxplotQuery, DistributionQuery, PairQuery, DEFAULT_K};

fn default_k() -> u64 {
    DEFAULT_K
}

/// What a report contains beyond the summary table and the general
/// distribution of every attribute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(default = "default_k")]
    pub k: u64,
    /// Report-wide threshold overrides; a query's own overrides win.
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
    #[serde(default)]
    pub distributions: Vec<DistributionQuery>,
    #[serde(default)]
    pub boxplots: Vec<BoxplotQuery>,
    #[serde(default)]
    pub cooccurrence: Vec<PairQuery>,
    #[serde(default)]
    pub npmi: Vec<PairQuery>,
}

impl Default for ReportParams {
    fn default() -> Self {
        Self {
            name: None,
            k: DEFAULT_K,
            thresholds: BTreeMap::new(),
            distributions: Vec::new(),
            boxplots: Vec::new(),
            cooccurrence: Vec::new(),
            npmi: Vec::new(),
        }
    }
}

impl ReportParams {
    pub fn from_toml_str(text: &str) -> Result<Self, ReportError> {
        toml::from_str(text).map_err(|e| ReportError::Params(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, ReportError> {
        let text = std::fs::read_to_string(path).map_err(|e| ReportError::Io(format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub(crate) fn merged(&self, own: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
        let mut t = self.thresholds.clone();
        t.extend(own.iter().map(|(k, v)| (k.clone(), *v)));
        t
    }
}
