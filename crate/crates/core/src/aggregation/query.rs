use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::signal_model::Value;

/// Rows an aggregate counts: images, or the individuals detected in them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Unit {
    Sample,
    Individual,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case")]
pub enum Predicate {
    Eq { value: Value },
    Ne { value: Value },
    In { values: Vec<Value> },
    Ge { value: f64 },
    Gt { value: f64 },
    Le { value: f64 },
    Lt { value: f64 },
    Present,
    Missing,
}

impl Predicate {
    /// Evaluates against a possibly missing value. Comparisons and equality
    /// are false on missing values; `ne` is true there.
    pub fn matches(&self, v: Option<&Value>) -> bool {
        match self {
            Predicate::Present => v.is_some(),
            Predicate::Missing => v.is_none(),
            Predicate::Eq { value } => v == Some(value),
            Predicate::Ne { value } => v != Some(value),
            Predicate::In { values } => v.is_some_and(|v| values.contains(v)),
            Predicate::Ge { value } => num(v).is_some_and(|x| x >= *value),
            Predicate::Gt { value } => num(v).is_some_and(|x| x > *value),
            Predicate::Le { value } => num(v).is_some_and(|x| x <= *value),
            Predicate::Lt { value } => num(v).is_some_and(|x| x < *value),
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Predicate::Ge { .. } | Predicate::Gt { .. } | Predicate::Le { .. } | Predicate::Lt { .. }
        )
    }
}

fn num(v: Option<&Value>) -> Option<f64> {
    v.and_then(Value::as_number)
}

/// One predicate on one attribute. A query's filters are combined with AND.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Filter {
    pub attribute: String,
    #[serde(flatten)]
    pub predicate: Predicate,
}

impl Filter {
    pub fn new(attribute: impl Into<String>, predicate: Predicate) -> Self {
        Self {
            attribute: attribute.into(),
            predicate,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionQuery {
    pub attribute: String,
    #[serde(default)]
    pub facets: Vec<String>,
    #[serde(default)]
    pub filters: Vec<Filter>,
    /// Threshold overrides keyed by probability attribute.
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
}

impl DistributionQuery {
    pub fn new(attribute: impl Into<String>) -> Self {
        Self {
            attribute: attribute.into(),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxplotQuery {
    pub attribute: String,
    #[serde(default)]
    pub filters: Vec<Filter>,
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    #[default]
    Raw,
    /// Each row sums to 1.
    Row,
    /// Each column sums to 1.
    Column,
    /// The whole table sums to 1.
    Total,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairQuery {
    pub x: String,
    pub y: String,
    #[serde(default)]
    pub normalization: Normalization,
    #[serde(default)]
    pub filters: Vec<Filter>,
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
}

impl PairQuery {
    pub fn new(x: impl Into<String>, y: impl Into<String>) -> Self {
        Self {
            x: x.into(),
            y: y.into(),
            ..Self::default()
        }
    }
}
