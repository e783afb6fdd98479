use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::query::{Filter, Unit};
use super::quantize::QuantizationSpec;
use super::AggregateError;
use crate::derivation::{Column, Frame};
use crate::signal_model::{Dataset, Kind, Scope, ThresholdConfig, Value};

/// The filtered population of one query: materialized columns, the unit of
/// analysis and the rows that pass every filter.
pub struct Rows<'a> {
    frame: Frame<'a>,
    pub unit: Unit,
    pub selected: Vec<usize>,
}

/// Resolves overrides on top of the schema thresholds. Keys must name
/// probability attributes.
pub fn resolve_thresholds(dataset: &Dataset, overrides: &BTreeMap<String, f64>) -> Result<ThresholdConfig, AggregateError> {
    let schema = dataset.schema();
    for name in overrides.keys() {
        let d = schema.get(name).ok_or_else(|| AggregateError::unknown(name, dataset))?;
        if d.kind != Kind::Probability {
            return Err(AggregateError::NotThresholdable(name.clone()));
        }
    }
    schema
        .thresholds()
        .with_overrides(overrides)
        .map_err(|e| AggregateError::Threshold(e.to_string()))
}

impl<'a> Rows<'a> {
    /// `axes` fix the unit: individuals when any of them is per-individual.
    /// Filters on per-individual attributes select a sample when any of its
    /// individuals matches; per-sample values are broadcast to individuals.
    pub fn build(
        dataset: &'a Dataset,
        thresholds: &BTreeMap<String, f64>,
        axes: &[&str],
        filters: &[Filter],
    ) -> Result<Self, AggregateError> {
        let schema = dataset.schema();
        let mut names: Vec<&str> = axes.to_vec();
        names.extend(filters.iter().map(|f| f.attribute.as_str()));
        for n in &names {
            if schema.get(n).is_none() {
                return Err(AggregateError::unknown(n, dataset));
            }
        }
        for f in filters {
            if f.predicate.is_numeric() && !schema.get(&f.attribute).expect("checked").kind.is_numeric() {
                return Err(AggregateError::BadFilter {
                    attribute: f.attribute.clone(),
                    reason: "numeric comparison on a non-numeric attribute".into(),
                });
            }
        }
        let config = resolve_thresholds(dataset, thresholds)?;
        let frame = Frame::build(dataset, &config, &names)?;
        let unit = if axes
            .iter()
            .any(|a| schema.get(a).expect("checked").scope == Scope::PerIndividual)
        {
            Unit::Individual
        } else {
            Unit::Sample
        };
        let n = match unit {
            Unit::Sample => frame.n_samples(),
            Unit::Individual => frame.n_individuals(),
        };
        let mut rows = Self {
            frame,
            unit,
            selected: Vec::new(),
        };
        rows.selected = (0..n)
            .filter(|&r| filters.iter().all(|f| rows.passes(f, r)))
            .collect();
        Ok(rows)
    }

    fn passes(&self, f: &Filter, row: usize) -> bool {
        let col = self.frame.column(&f.attribute);
        match (self.unit, col.scope) {
            (Unit::Sample, Scope::PerIndividual) => self
                .frame
                .individual_rows(row)
                .any(|i| f.predicate.matches(col.get(i))),
            _ => f.predicate.matches(self.value(&f.attribute, row)),
        }
    }

    pub fn frame(&self) -> &Frame<'a> {
        &self.frame
    }

    pub fn column(&self, attribute: &str) -> &Column {
        self.frame.column(attribute)
    }

    /// Value of an axis attribute on a row of this unit.
    pub fn value(&self, attribute: &str, row: usize) -> Option<&Value> {
        let col = self.frame.column(attribute);
        match (self.unit, col.scope) {
            (Unit::Individual, Scope::PerSample) => col.get(self.frame.owner(row)),
            _ => col.get(row),
        }
    }

    pub fn tie(&self, attribute: &str, row: usize) -> bool {
        let col = self.frame.column(attribute);
        match (self.unit, col.scope) {
            (Unit::Individual, Scope::PerSample) => col.tie(self.frame.owner(row)),
            _ => col.tie(row),
        }
    }

    pub fn kind(&self, attribute: &str) -> &Kind {
        &self.frame.dataset().schema().get(attribute).expect("checked").kind
    }

    /// Numeric values of `attribute` over `rows`, skipping missing ones.
    pub fn numbers(&self, attribute: &str, rows: &[usize]) -> Vec<f64> {
        rows.iter()
            .filter_map(|&r| self.value(attribute, r).and_then(Value::as_number))
            .collect()
    }

    /// Maps `attribute` on each of `rows` to a level of a discrete axis.
    /// Numeric attributes are quantized over the values present in `rows`.
    pub fn encode(&self, attribute: &str, rows: &[usize]) -> Result<(Axis, Vec<Option<usize>>), AggregateError> {
        match self.kind(attribute).clone() {
            Kind::Categorical { classes } => {
                let labels = if classes.is_empty() {
                    rows.iter()
                        .filter_map(|&r| self.value(attribute, r).and_then(Value::as_label))
                        .collect::<BTreeSet<_>>()
                        .into_iter()
                        .map(str::to_string)
                        .collect()
                } else {
                    classes
                };
                let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
                let codes = rows
                    .iter()
                    .map(|&r| {
                        self.value(attribute, r)
                            .and_then(Value::as_label)
                            .and_then(|l| index.get(l).copied())
                    })
                    .collect();
                Ok((
                    Axis {
                        attribute: attribute.to_string(),
                        kind: AxisKind::Classes,
                        labels,
                        quantization: None,
                    },
                    codes,
                ))
            }
            Kind::Probability | Kind::Continuous { .. } => {
                let values: Vec<Option<f64>> = rows
                    .iter()
                    .map(|&r| self.value(attribute, r).and_then(Value::as_number))
                    .collect();
                let present: Vec<f64> = values.iter().flatten().copied().collect();
                let spec = match self.kind(attribute) {
                    Kind::Probability => Some(QuantizationSpec::probability()),
                    _ if present.is_empty() => None,
                    _ => Some(QuantizationSpec::continuous(&present)?),
                };
                let codes = match &spec {
                    Some(s) => values.iter().map(|v| v.map(|v| s.bin(v))).collect(),
                    None => vec![None; rows.len()],
                };
                Ok((
                    Axis {
                        attribute: attribute.to_string(),
                        kind: AxisKind::Bins,
                        labels: spec.as_ref().map(QuantizationSpec::labels).unwrap_or_default(),
                        quantization: spec,
                    },
                    codes,
                ))
            }
            Kind::ProbabilityVector { .. } => Err(AggregateError::NotQuantizable {
                attribute: attribute.to_string(),
                kind: "probability_vector",
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisKind {
    Classes,
    Bins,
}

/// The discrete levels of an attribute in one aggregate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Axis {
    pub attribute: String,
    pub kind: AxisKind,
    pub labels: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quantization: Option<QuantizationSpec>,
}

impl Axis {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Probability component axis of a vector attribute.
    pub(crate) fn probability_bins(attribute: &str) -> Self {
        let spec = QuantizationSpec::probability();
        Self {
            attribute: attribute.to_string(),
            kind: AxisKind::Bins,
            labels: spec.labels(),
            quantization: Some(spec),
        }
    }
}
