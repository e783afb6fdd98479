use std::fmt;

use serde::{Deserialize, Serialize};

use super::value::Value;

/// Tolerance on the sum of a probability vector.
pub const VECTOR_SUM_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Labels,
    Demographics,
    Pornography,
    Context,
    Quality,
    Metadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scope {
    PerSample,
    PerIndividual,
}

impl fmt::Display for Scope {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scope::PerSample => "per_sample",
            Scope::PerIndividual => "per_individual",
        })
    }
}

/// Value kind of an attribute.
///
/// A categorical kind with an empty class list is an open vocabulary: any
/// label is accepted and the levels are discovered from the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Kind {
    Categorical { classes: Vec<String> },
    Continuous { unit: String },
    Probability,
    ProbabilityVector { classes: Vec<String> },
}

impl Kind {
    pub fn name(&self) -> &'static str {
        match self {
            Kind::Categorical { .. } => "categorical",
            Kind::Continuous { .. } => "continuous",
            Kind::Probability => "probability",
            Kind::ProbabilityVector { .. } => "probability_vector",
        }
    }

    /// Number of classes of a probability vector.
    pub fn n_c(&self) -> Option<usize> {
        match self {
            Kind::ProbabilityVector { classes } => Some(classes.len()),
            _ => None,
        }
    }

    pub fn is_numeric(&self) -> bool {
        matches!(self, Kind::Continuous { .. } | Kind::Probability)
    }

    /// Checks a value against the kind's constraints.
    pub fn check(&self, value: &Value) -> Result<(), KindViolation> {
        match (self, value) {
            (Kind::Categorical { classes }, Value::Label(label)) => {
                if classes.is_empty() || classes.iter().any(|c| c == label) {
                    Ok(())
                } else {
                    Err(KindViolation::UnknownClass(label.clone()))
                }
            }
            (Kind::Continuous { .. }, Value::Number(v)) => {
                if v.is_finite() {
                    Ok(())
                } else {
                    Err(KindViolation::NotFinite)
                }
            }
            (Kind::Probability, Value::Number(v)) => {
                if (0.0..=1.0).contains(v) {
                    Ok(())
                } else {
                    Err(KindViolation::ProbabilityRange(*v))
                }
            }
            (Kind::ProbabilityVector { classes }, Value::Vector(v)) => {
                if v.len() != classes.len() {
                    return Err(KindViolation::VectorLength {
                        expected: classes.len(),
                        found: v.len(),
                    });
                }
                if let Some(bad) = v.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                    return Err(KindViolation::ProbabilityRange(*bad));
                }
                let sum: f64 = v.iter().sum();
                if (sum - 1.0).abs() > VECTOR_SUM_TOLERANCE {
                    return Err(KindViolation::VectorSum(sum));
                }
                Ok(())
            }
            (kind, value) => Err(KindViolation::WrongType {
                expected: kind.name(),
                found: value.type_name(),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum KindViolation {
    #[error("expected a {expected} value, found a {found}")]
    WrongType {
        expected: &'static str,
        found: &'static str,
    },
    #[error("probability {0} outside [0, 1]")]
    ProbabilityRange(f64),
    #[error("vector has {found} entries, attribute has {expected} classes")]
    VectorLength { expected: usize, found: usize },
    #[error("probability vector sums to {0}, expected 1")]
    VectorSum(f64),
    #[error("label {0:?} is not a declared class")]
    UnknownClass(String),
    #[error("value is not finite")]
    NotFinite,
}

/// How a derived attribute is computed from other attributes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case")]
pub enum DerivationRule {
    /// Binary class from a probability: positive iff p >= t.
    Threshold { of: String },
    /// Class of maximum activation of a probability vector.
    Argmax { of: String },
    /// Per-sample number of individuals carrying `of`, optionally only
    /// those labelled `class`.
    Count {
        of: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        class: Option<String>,
    },
    /// Per-sample population standard deviation over individuals.
    Std { of: String },
    /// Per-sample presence class: `present` when any individual carries `of`.
    Presence { of: String },
    /// Box area of individuals carrying `of`, absolute (px²) or relative.
    BoxArea { of: String, relative: bool },
    /// Macro class through a named mapping table; `level` 1 is the coarsest.
    Macro {
        of: String,
        mapping: String,
        level: usize,
    },
}

impl DerivationRule {
    pub fn id(&self) -> &'static str {
        match self {
            DerivationRule::Threshold { .. } => "threshold",
            DerivationRule::Argmax { .. } => "argmax",
            DerivationRule::Count { .. } => "count",
            DerivationRule::Std { .. } => "std",
            DerivationRule::Presence { .. } => "presence",
            DerivationRule::BoxArea { .. } => "box_area",
            DerivationRule::Macro { .. } => "macro",
        }
    }

    /// The attribute this rule reads.
    pub fn source(&self) -> &str {
        match self {
            DerivationRule::Threshold { of }
            | DerivationRule::Argmax { of }
            | DerivationRule::Count { of, .. }
            | DerivationRule::Std { of }
            | DerivationRule::Presence { of }
            | DerivationRule::BoxArea { of, .. }
            | DerivationRule::Macro { of, .. } => of,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Source {
    Native,
    External,
    Derived(DerivationRule),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeDescriptor {
    pub name: String,
    pub group: Group,
    pub scope: Scope,
    pub kind: Kind,
    pub source: Source,
}

impl AttributeDescriptor {
    pub fn new(name: impl Into<String>, group: Group, scope: Scope, kind: Kind, source: Source) -> Self {
        Self {
            name: name.into(),
            group,
            scope,
            kind,
            source,
        }
    }

    pub fn rule(&self) -> Option<&DerivationRule> {
        match &self.source {
            Source::Derived(rule) => Some(rule),
            _ => None,
        }
    }

    pub fn is_derived(&self) -> bool {
        self.rule().is_some()
    }
}
