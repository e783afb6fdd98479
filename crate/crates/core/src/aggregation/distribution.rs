use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cells::{CountCell, PrivacyMeta};
use super::query::{DistributionQuery, Unit};
use super::quantize::QuantizationSpec;
use super::rows::{Axis, Rows};
use super::AggregateError;
use crate::signal_model::{Dataset, DerivationRule, Kind, Value};

pub const MAX_FACETS: usize = 3;

/// Counts for one facet cell, and for vector attributes one component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionCell {
    /// Level index on each facet axis.
    pub facet: Vec<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub component: Option<usize>,
    /// Rows in this facet cell; `counts` plus `missing` add up to it.
    pub total: CountCell,
    pub counts: Vec<CountCell>,
    pub missing: CountCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Distribution {
    pub query: DistributionQuery,
    pub unit: Unit,
    /// Rows passing the filters.
    pub population: CountCell,
    pub axis: Axis,
    /// Class names of a probability-vector attribute, one histogram each.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub components: Vec<String>,
    #[serde(default)]
    pub facets: Vec<Axis>,
    /// Rows dropped because a facet value is missing.
    pub facet_missing: CountCell,
    /// Non-empty facet cells in lexicographic order of their coordinates.
    pub cells: Vec<DistributionCell>,
    /// Rows whose class came from a tied argmax.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ties: Option<CountCell>,
    pub privacy: PrivacyMeta,
}

impl Distribution {
    pub fn cell(&self, facet: &[usize], component: Option<usize>) -> Option<&DistributionCell> {
        self.cells
            .iter()
            .find(|c| c.facet == facet && c.component == component)
    }
}

/// Histogram of an attribute over the filtered population, optionally split
/// by up to three facet attributes. Threshold overrides re-derive every
/// class attribute read by the query.
pub fn distribution(dataset: &Dataset, query: &DistributionQuery) -> Result<Distribution, AggregateError> {
    if query.facets.len() > MAX_FACETS {
        return Err(AggregateError::TooManyFacets(query.facets.len()));
    }
    let mut axes = vec![query.attribute.as_str()];
    axes.extend(query.facets.iter().map(String::as_str));
    let rows = Rows::build(dataset, &query.thresholds, &axes, &query.filters)?;
    let selected = &rows.selected;

    let mut facets = Vec::with_capacity(query.facets.len());
    let mut facet_codes = Vec::with_capacity(query.facets.len());
    for f in &query.facets {
        let (axis, codes) = rows.encode(f, selected)?;
        facets.push(axis);
        facet_codes.push(codes);
    }
    // position in `selected` -> facet coordinates, None when any is missing
    let coords: Vec<Option<Vec<usize>>> = (0..selected.len())
        .map(|i| facet_codes.iter().map(|c| c[i]).collect())
        .collect();
    let facet_missing = coords.iter().filter(|c| c.is_none()).count() as u64;

    let kind = rows.kind(&query.attribute).clone();
    let (axis, components, values): (Axis, Vec<String>, Vec<Vec<Option<usize>>>) = match &kind {
        Kind::ProbabilityVector { classes } => {
            let spec = QuantizationSpec::probability();
            let per_component = (0..classes.len())
                .map(|k| {
                    selected
                        .iter()
                        .map(|&r| {
                            rows.value(&query.attribute, r)
                                .and_then(Value::as_vector)
                                .map(|v| spec.bin(v[k]))
                        })
                        .collect()
                })
                .collect();
            (Axis::probability_bins(&query.attribute), classes.clone(), per_component)
        }
        _ => {
            let (axis, codes) = rows.encode(&query.attribute, selected)?;
            (axis, Vec::new(), vec![codes])
        }
    };

    let mut grouped: BTreeMap<&[usize], Vec<usize>> = BTreeMap::new();
    for (i, c) in coords.iter().enumerate() {
        if let Some(c) = c {
            grouped.entry(c.as_slice()).or_default().push(i);
        }
    }
    if query.facets.is_empty() && grouped.is_empty() {
        grouped.insert(&[], Vec::new());
    }

    let mut cells = Vec::new();
    for (coord, members) in &grouped {
        for (k, codes) in values.iter().enumerate() {
            let mut counts = vec![0u64; axis.len()];
            let mut missing = 0u64;
            for &i in members {
                match codes[i] {
                    Some(b) => counts[b] += 1,
                    None => missing += 1,
                }
            }
            cells.push(DistributionCell {
                facet: coord.to_vec(),
                component: (!components.is_empty()).then_some(k),
                total: CountCell::Count(members.len() as u64),
                counts: counts.into_iter().map(CountCell::Count).collect(),
                missing: CountCell::Count(missing),
            });
        }
    }

    let is_argmax = matches!(
        dataset.schema().get(&query.attribute).and_then(|d| d.rule()),
        Some(DerivationRule::Argmax { .. })
    );
    let ties = is_argmax.then(|| {
        CountCell::Count(selected.iter().filter(|&&r| rows.tie(&query.attribute, r)).count() as u64)
    });

    Ok(Distribution {
        query: query.clone(),
        unit: rows.unit,
        population: CountCell::Count(selected.len() as u64),
        axis,
        components,
        facets,
        facet_missing: CountCell::Count(facet_missing),
        cells,
        ties,
        privacy: PrivacyMeta { k: 1, suppressed_cells: 0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::query::{Filter, Predicate};
    use crate::signal_model::{ingest_manifest, Schema, SignalManifestEntry as E, Strictness};
    use std::sync::Arc;

    fn counts(c: &DistributionCell) -> Vec<u64> {
        c.counts.iter().map(|c| c.count().unwrap()).collect()
    }

    fn dataset() -> Dataset {
        let mut entries = Vec::new();
        let nsfw = [0.05, 0.35, 0.5, 0.79, 0.8, 0.95, 0.2, 0.31];
        for (i, p) in nsfw.iter().enumerate() {
            let id = format!("s{i}");
            entries.push(E::per_sample(&id, "nsfw", Value::Number(*p)));
            entries.push(E::per_sample(&id, "colormode", Value::Label(if i % 3 == 0 { "RGB" } else { "grayscale" }.into())));
            if i % 2 == 0 {
                let age = if i == 4 {
                    vec![0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]
                } else {
                    vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0]
                };
                entries.push(E::per_individual(&id, "age", 0, Value::Vector(age)));
            }
        }
        ingest_manifest(entries, Arc::new(Schema::builtin()), Strictness::Abort)
            .unwrap()
            .dataset
    }

    #[test]
    fn plain_histogram() {
        let ds = dataset();
        let d = distribution(&ds, &DistributionQuery::new("nsfw_class")).unwrap();
        assert_eq!(d.axis.labels, vec!["negative", "positive"]);
        assert_eq!(d.cells.len(), 1);
        // default nsfw threshold 0.3: 0.35 0.5 0.79 0.8 0.95 0.31
        assert_eq!(counts(&d.cells[0]), vec![2, 6]);
        assert_eq!(d.population, CountCell::Count(8));
    }

    #[test]
    fn threshold_override_matches_recount() {
        let ds = dataset();
        let mut q = DistributionQuery::new("nsfw_class");
        q.thresholds.insert("nsfw".into(), 0.8);
        let d = distribution(&ds, &q).unwrap();
        let brute = ds
            .samples()
            .iter()
            .filter(|s| s.get("nsfw").and_then(Value::as_number).unwrap() >= 0.8)
            .count() as u64;
        assert_eq!(d.cells[0].counts[1], CountCell::Count(brute));
        assert_eq!(d.query.thresholds["nsfw"], 0.8);
    }

    #[test]
    fn facets_marginalize() {
        let ds = dataset();
        let plain = distribution(&ds, &DistributionQuery::new("nsfw")).unwrap();
        let mut q = DistributionQuery::new("nsfw");
        q.facets = vec!["colormode".into(), "nsfw_class".into()];
        let d = distribution(&ds, &q).unwrap();
        let mut sum = vec![0u64; 10];
        for c in &d.cells {
            for (s, v) in sum.iter_mut().zip(counts(c)) {
                *s += v;
            }
        }
        assert_eq!(sum, counts(&plain.cells[0]));
        // constant facet leaves counts unchanged
        let mut q = DistributionQuery::new("nsfw_class");
        q.filters = vec![Filter::new("colormode", Predicate::Eq { value: Value::Label("RGB".into()) })];
        let base = distribution(&ds, &q).unwrap();
        q.facets = vec!["colormode".into()];
        let faceted = distribution(&ds, &q).unwrap();
        assert_eq!(faceted.cells.len(), 1);
        assert_eq!(faceted.cells[0].counts, base.cells[0].counts);
    }

    #[test]
    fn per_individual_missing_and_ties() {
        let ds = dataset();
        let d = distribution(&ds, &DistributionQuery::new("age_class")).unwrap();
        assert_eq!(d.unit, Unit::Individual);
        assert_eq!(d.population, CountCell::Count(4));
        assert_eq!(d.ties, Some(CountCell::Count(1)));
        assert_eq!(d.cells[0].counts[0], CountCell::Count(1));
        assert_eq!(d.cells[0].counts[6], CountCell::Count(3));

        let v = distribution(&ds, &DistributionQuery::new("age")).unwrap();
        assert_eq!(v.components.len(), 8);
        assert_eq!(v.cells.len(), 8);
        assert_eq!(v.cells[0].counts[5], CountCell::Count(1));
        assert_eq!(v.cells[6].counts[9], CountCell::Count(3));

        // nsfw faceted by a per-individual attribute switches to individuals
        let mut q = DistributionQuery::new("nsfw_class");
        q.facets = vec!["age_class".into()];
        let d = distribution(&ds, &q).unwrap();
        assert_eq!(d.unit, Unit::Individual);
        let total: u64 = d.cells.iter().map(|c| c.total.count().unwrap()).sum();
        assert_eq!(total, 4);
    }

    #[test]
    fn limits() {
        let ds = dataset();
        let mut q = DistributionQuery::new("nsfw");
        q.facets = vec!["colormode".into(), "nsfw_class".into(), "extension".into(), "scene".into()];
        assert_eq!(distribution(&ds, &q), Err(AggregateError::TooManyFacets(4)));
        let e = distribution(&ds, &DistributionQuery::new("unknown")).unwrap_err();
        assert!(matches!(e, AggregateError::UnknownAttribute { .. }));
        let mut q = DistributionQuery::new("nsfw");
        q.facets = vec!["age".into()];
        assert!(matches!(distribution(&ds, &q), Err(AggregateError::NotQuantizable { .. })));
    }

    #[test]
    fn all_missing_continuous() {
        let ds = dataset();
        let d = distribution(&ds, &DistributionQuery::new("brisque")).unwrap();
        assert!(d.axis.is_empty());
        assert_eq!(d.cells[0].missing, CountCell::Count(8));
    }
}
