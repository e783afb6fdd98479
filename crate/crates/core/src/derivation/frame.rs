use std::collections::HashMap;

use super::ops::{argmax_unchecked, classify_binary, map_macro, ordinal, per_sample_std, BinaryClass};
use super::DeriveError;
use crate::signal_model::{Dataset, DerivationRule, Kind, Scope, ThresholdConfig, Value};

/// Values of one attribute for every row of its scope: one per sample, or
/// one per individual in flattened order.
#[derive(Debug, Clone)]
pub struct Column {
    pub scope: Scope,
    pub values: Vec<Option<Value>>,
    /// Per-row argmax tie flags; empty when the attribute is not an argmax.
    pub ties: Vec<bool>,
}

impl Column {
    pub fn get(&self, row: usize) -> Option<&Value> {
        self.values[row].as_ref()
    }

    pub fn tie(&self, row: usize) -> bool {
        self.ties.get(row).copied().unwrap_or(false)
    }
}

/// Raw and derived attribute values for a dataset under one threshold
/// configuration. Only the requested attributes (and what they read) are
/// materialized.
#[derive(Debug)]
pub struct Frame<'a> {
    dataset: &'a Dataset,
    thresholds: ThresholdConfig,
    /// `offsets[s]..offsets[s + 1]` are the individual rows of sample `s`.
    offsets: Vec<usize>,
    owner: Vec<usize>,
    columns: HashMap<String, Column>,
}

impl<'a> Frame<'a> {
    pub fn build(dataset: &'a Dataset, thresholds: &ThresholdConfig, attributes: &[&str]) -> Result<Self, DeriveError> {
        let mut offsets = Vec::with_capacity(dataset.len() + 1);
        let mut owner = Vec::with_capacity(dataset.individual_count());
        offsets.push(0);
        for (s, sample) in dataset.samples().iter().enumerate() {
            owner.extend(std::iter::repeat(s).take(sample.individuals.len()));
            offsets.push(owner.len());
        }
        let mut frame = Self {
            dataset,
            thresholds: thresholds.clone(),
            offsets,
            owner,
            columns: HashMap::new(),
        };
        for a in attributes {
            frame.materialize(a)?;
        }
        Ok(frame)
    }

    pub fn dataset(&self) -> &'a Dataset {
        self.dataset
    }

    pub fn thresholds(&self) -> &ThresholdConfig {
        &self.thresholds
    }

    pub fn n_samples(&self) -> usize {
        self.dataset.len()
    }

    pub fn n_individuals(&self) -> usize {
        self.owner.len()
    }

    pub fn individual_rows(&self, sample: usize) -> std::ops::Range<usize> {
        self.offsets[sample]..self.offsets[sample + 1]
    }

    pub fn owner(&self, individual_row: usize) -> usize {
        self.owner[individual_row]
    }

    /// Column of a materialized attribute. Panics if it was not requested.
    pub fn column(&self, attribute: &str) -> &Column {
        self.columns
            .get(attribute)
            .unwrap_or_else(|| panic!("attribute {attribute:?} not materialized"))
    }

    fn materialize(&mut self, name: &str) -> Result<(), DeriveError> {
        if self.columns.contains_key(name) {
            return Ok(());
        }
        let schema = self.dataset.schema();
        let d = schema
            .get(name)
            .ok_or_else(|| DeriveError::UnknownAttribute(name.to_string()))?
            .clone();
        let column = match d.rule() {
            None => self.raw_column(name, d.scope),
            Some(rule) => {
                self.materialize(rule.source())?;
                self.derived_column(name, rule, &d.kind)?
            }
        };
        self.columns.insert(name.to_string(), column);
        Ok(())
    }

    fn raw_column(&self, name: &str, scope: Scope) -> Column {
        let values = match scope {
            Scope::PerSample => self
                .dataset
                .samples()
                .iter()
                .map(|s| s.get(name).cloned())
                .collect(),
            Scope::PerIndividual => self
                .dataset
                .samples()
                .iter()
                .flat_map(|s| s.individuals.iter().map(|i| i.get(name).cloned()))
                .collect(),
        };
        Column {
            scope,
            values,
            ties: Vec::new(),
        }
    }

    fn derived_column(&self, name: &str, rule: &DerivationRule, kind: &Kind) -> Result<Column, DeriveError> {
        let schema = self.dataset.schema();
        let src = &self.columns[rule.source()];
        let src_kind = &schema.get(rule.source()).expect("validated").kind;
        let classes = match kind {
            Kind::Categorical { classes } => classes.as_slice(),
            _ => &[],
        };
        let err = |e: DeriveError| DeriveError::Attribute {
            attribute: name.to_string(),
            source: Box::new(e),
        };
        let mut ties = Vec::new();
        let values: Vec<Option<Value>> = match rule {
            DerivationRule::Threshold { of } => {
                let t = self.thresholds.get(of);
                src.values
                    .iter()
                    .map(|v| {
                        v.as_ref()
                            .and_then(Value::as_number)
                            .map(|p| {
                                classify_binary(p, t).map(|c| {
                                    let k = match c {
                                        BinaryClass::Negative => 0,
                                        BinaryClass::Positive => 1,
                                    };
                                    Value::Label(classes[k].clone())
                                })
                            })
                            .transpose()
                    })
                    .collect::<Result<_, _>>()
                    .map_err(err)?
            }
            DerivationRule::Argmax { .. } => {
                ties = vec![false; src.values.len()];
                src.values
                    .iter()
                    .enumerate()
                    .map(|(row, v)| {
                        v.as_ref().and_then(Value::as_vector).map(|p| {
                            let a = argmax_unchecked(p);
                            ties[row] = a.tie;
                            Value::Label(classes[a.index].clone())
                        })
                    })
                    .collect()
            }
            DerivationRule::Macro { mapping, level, .. } => {
                let table = schema.mapping(mapping).expect("validated");
                src.values
                    .iter()
                    .map(|v| {
                        v.as_ref()
                            .and_then(Value::as_label)
                            .map(|l| map_macro(l, table, *level).map(|m| Value::Label(m.to_string())))
                            .transpose()
                    })
                    .collect::<Result<_, _>>()
                    .map_err(err)?
            }
            DerivationRule::BoxArea { relative, .. } => {
                let mut out = Vec::with_capacity(src.values.len());
                for sample in self.dataset.samples() {
                    for ind in &sample.individuals {
                        let row = out.len();
                        let area = if src.values[row].is_some() {
                            if *relative {
                                ind.relative_area
                            } else {
                                ind.absolute_area
                            }
                        } else {
                            None
                        };
                        out.push(area.map(Value::Number));
                    }
                }
                out
            }
            DerivationRule::Count { class, .. } => (0..self.n_samples())
                .map(|s| {
                    let n = self
                        .individual_rows(s)
                        .filter(|&r| match (&src.values[r], class) {
                            (None, _) => false,
                            (Some(_), None) => true,
                            (Some(v), Some(c)) => v.as_label() == Some(c.as_str()),
                        })
                        .count();
                    Some(Value::Number(n as f64))
                })
                .collect(),
            DerivationRule::Presence { .. } => (0..self.n_samples())
                .map(|s| {
                    let any = self.individual_rows(s).any(|r| src.values[r].is_some());
                    Some(Value::Label(classes[any as usize].clone()))
                })
                .collect(),
            DerivationRule::Std { .. } => {
                let src_classes = match src_kind {
                    Kind::Categorical { classes } => classes.as_slice(),
                    _ => &[],
                };
                (0..self.n_samples())
                    .map(|s| {
                        let xs: Vec<f64> = self
                            .individual_rows(s)
                            .filter_map(|r| src.values[r].as_ref())
                            .filter_map(|v| ordinal(v, src_classes))
                            .collect();
                        per_sample_std(&xs).map(Value::Number)
                    })
                    .collect()
            }
        };
        let scope = match rule {
            DerivationRule::Count { .. } | DerivationRule::Presence { .. } | DerivationRule::Std { .. } => {
                Scope::PerSample
            }
            _ => src.scope,
        };
        Ok(Column { scope, values, ties })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_model::{ingest_manifest, BoxRect, Schema, SignalManifestEntry as E, Strictness};
    use std::sync::Arc;

    fn dataset() -> Dataset {
        let entries = vec![
            E::per_sample("a", "nsfw", Value::Number(0.35)),
            E::per_sample("b", "nsfw", Value::Number(0.9)),
            E::per_sample("c", "nsfw", Value::Number(0.1)),
            E::per_sample("a", "width", Value::Number(100.0)),
            E::per_sample("a", "height", Value::Number(100.0)),
            E::per_individual("a", "face", 0, Value::Number(0.99)).with_box(BoxRect::new(0.0, 0.0, 50.0, 50.0)),
            E::per_individual("a", "age", 0, Value::Vector(vec![0.0, 0.0, 0.5, 0.5, 0.0, 0.0, 0.0, 0.0])),
            E::per_individual("a", "age", 1, Value::Vector(vec![0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0])),
            E::per_individual("a", "object", 2, Value::Label("teddy bear".into())),
            E::per_individual("b", "object", 0, Value::Label("person".into())),
            E::per_individual("b", "object", 1, Value::Label("person".into())),
        ];
        ingest_manifest(entries, Arc::new(Schema::builtin()), Strictness::Abort)
            .unwrap()
            .dataset
    }

    fn labels(c: &Column) -> Vec<Option<&str>> {
        c.values.iter().map(|v| v.as_ref().and_then(Value::as_label)).collect()
    }

    fn numbers(c: &Column) -> Vec<Option<f64>> {
        c.values.iter().map(|v| v.as_ref().and_then(Value::as_number)).collect()
    }

    #[test]
    fn thresholds_follow_configuration() {
        let ds = dataset();
        let f = Frame::build(&ds, ds.schema().thresholds(), &["nsfw_class"]).unwrap();
        assert_eq!(labels(f.column("nsfw_class")), vec![Some("positive"), Some("positive"), Some("negative")]);
        let mut t = ds.schema().thresholds().clone();
        t.set("nsfw", 0.8).unwrap();
        let f = Frame::build(&ds, &t, &["nsfw_class"]).unwrap();
        assert_eq!(labels(f.column("nsfw_class")), vec![Some("negative"), Some("positive"), Some("negative")]);
    }

    #[test]
    fn per_individual_rules() {
        let ds = dataset();
        let f = Frame::build(
            &ds,
            ds.schema().thresholds(),
            &["age_class", "age_std", "object_macro", "object_count", "object_count[person]", "face_relative_area", "face_presence"],
        )
        .unwrap();
        // individuals in order: a0, a1, a2, b0, b1
        assert_eq!(labels(f.column("age_class")), vec![Some("7-9"), Some("16-19"), None, None, None]);
        assert_eq!(f.column("age_class").ties, vec![true, false, false, false, false]);
        // ordinal indices 2 and 5 -> std 1.5
        assert_eq!(numbers(f.column("age_std")), vec![Some(1.5), None, None]);
        assert_eq!(labels(f.column("object_macro")), vec![None, None, Some("indoor"), Some("person"), Some("person")]);
        assert_eq!(numbers(f.column("object_count")), vec![Some(1.0), Some(2.0), Some(0.0)]);
        assert_eq!(numbers(f.column("object_count[person]")), vec![Some(0.0), Some(2.0), Some(0.0)]);
        assert_eq!(numbers(f.column("face_relative_area")), vec![Some(0.25), None, None, None, None]);
        assert_eq!(labels(f.column("face_presence")), vec![Some("present"), Some("absent"), Some("absent")]);
    }

    #[test]
    fn unknown_attribute() {
        let ds = dataset();
        assert!(matches!(
            Frame::build(&ds, ds.schema().thresholds(), &["nope"]),
            Err(DeriveError::UnknownAttribute(_))
        ));
    }
}
