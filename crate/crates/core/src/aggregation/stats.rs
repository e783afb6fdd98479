use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cells::{CountCell, Metric, PrivacyMeta};
use super::query::{BoxplotQuery, Unit};
use super::rows::Rows;
use super::AggregateError;
use crate::signal_model::{Dataset, Group, Kind, Scope, Value};

/// Classes listed per categorical attribute in the summary table.
pub const TOP_CLASSES: usize = 5;

/// Quantile by linear interpolation between order statistics of sorted data.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiveNumber {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    /// Most extreme data within 1.5 IQR of the quartiles.
    pub whisker_low: f64,
    pub whisker_high: f64,
    pub outliers: u64,
}

pub fn five_number(values: &[f64]) -> Option<FiveNumber> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let q1 = quantile(&v, 0.25);
    let q3 = quantile(&v, 0.75);
    let iqr = q3 - q1;
    let (fence_lo, fence_hi) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside: Vec<f64> = v.iter().copied().filter(|x| (fence_lo..=fence_hi).contains(x)).collect();
    Some(FiveNumber {
        min: v[0],
        q1,
        median: quantile(&v, 0.5),
        q3,
        max: v[v.len() - 1],
        whisker_low: inside.first().copied().unwrap_or(q1),
        whisker_high: inside.last().copied().unwrap_or(q3),
        outliers: (v.len() - inside.len()) as u64,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxplotSummary {
    pub query: BoxplotQuery,
    pub unit: Unit,
    pub count: CountCell,
    pub missing: CountCell,
    pub min: Metric,
    pub q1: Metric,
    pub median: Metric,
    pub q3: Metric,
    pub max: Metric,
    pub whisker_low: Metric,
    pub whisker_high: Metric,
    pub outliers: CountCell,
    pub privacy: PrivacyMeta,
}

impl BoxplotSummary {
    pub(crate) fn metrics_mut(&mut self) -> [&mut Metric; 7] {
        [
            &mut self.min,
            &mut self.q1,
            &mut self.median,
            &mut self.q3,
            &mut self.max,
            &mut self.whisker_low,
            &mut self.whisker_high,
        ]
    }
}

/// Boxplot of a numeric attribute over the filtered population.
pub fn boxplot_summary(dataset: &Dataset, query: &BoxplotQuery) -> Result<BoxplotSummary, AggregateError> {
    let rows = Rows::build(dataset, &query.thresholds, &[&query.attribute], &query.filters)?;
    if !rows.kind(&query.attribute).is_numeric() {
        return Err(AggregateError::NotNumeric(query.attribute.clone()));
    }
    let values = rows.numbers(&query.attribute, &rows.selected);
    let f = five_number(&values).ok_or_else(|| AggregateError::Empty(query.attribute.clone()))?;
    Ok(BoxplotSummary {
        query: query.clone(),
        unit: rows.unit,
        count: CountCell::Count(values.len() as u64),
        missing: CountCell::Count((rows.selected.len() - values.len()) as u64),
        min: Metric::from_f64(f.min),
        q1: Metric::from_f64(f.q1),
        median: Metric::from_f64(f.median),
        q3: Metric::from_f64(f.q3),
        max: Metric::from_f64(f.max),
        whisker_low: Metric::from_f64(f.whisker_low),
        whisker_high: Metric::from_f64(f.whisker_high),
        outliers: CountCell::Count(f.outliers),
        privacy: PrivacyMeta { k: 1, suppressed_cells: 0 },
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericSummary {
    pub min: Metric,
    pub max: Metric,
    pub mean: Metric,
    pub std: Metric,
    pub q1: Metric,
    pub median: Metric,
    pub q3: Metric,
}

impl NumericSummary {
    pub(crate) fn metrics_mut(&mut self) -> [&mut Metric; 7] {
        [
            &mut self.min,
            &mut self.max,
            &mut self.mean,
            &mut self.std,
            &mut self.q1,
            &mut self.median,
            &mut self.q3,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassCount {
    pub label: String,
    pub count: CountCell,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CategoricalSummary {
    /// Declared classes, or distinct observed labels for open vocabularies.
    pub cardinality: u64,
    pub top: Vec<ClassCount>,
}

/// One row of the nutrition-label table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SummaryRow {
    pub attribute: String,
    pub group: Group,
    pub scope: Scope,
    pub kind: String,
    pub derived: bool,
    pub count: CountCell,
    pub missing: CountCell,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub numeric: Option<NumericSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub categorical: Option<CategoricalSummary>,
}

/// Summary of one attribute over every row of its own scope.
pub fn summary_stats(dataset: &Dataset, attribute: &str, thresholds: &BTreeMap<String, f64>) -> Result<SummaryRow, AggregateError> {
    let rows = Rows::build(dataset, thresholds, &[attribute], &[])?;
    Ok(summary_row(&rows, attribute))
}

/// Summary rows for every schema attribute, in schema order.
pub fn summary_table(dataset: &Dataset, thresholds: &BTreeMap<String, f64>) -> Result<Vec<SummaryRow>, AggregateError> {
    let names = dataset.schema().attribute_names();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut out = Vec::with_capacity(names.len());
    for n in &refs {
        // one frame per attribute keeps the unit of each row at its own scope
        let rows = Rows::build(dataset, thresholds, &[n], &[])?;
        out.push(summary_row(&rows, n));
    }
    Ok(out)
}

fn summary_row(rows: &Rows<'_>, attribute: &str) -> SummaryRow {
    let d = rows.frame().dataset().schema().get(attribute).expect("checked").clone();
    let present: Vec<&Value> = rows
        .selected
        .iter()
        .filter_map(|&r| rows.value(attribute, r))
        .collect();
    let count = present.len() as u64;
    let missing = rows.selected.len() as u64 - count;
    let mut numeric = None;
    let mut categorical = None;
    match &d.kind {
        Kind::Probability | Kind::Continuous { .. } => {
            let v: Vec<f64> = present.iter().filter_map(|v| v.as_number()).collect();
            numeric = Some(match five_number(&v) {
                Some(f) => {
                    let n = v.len() as f64;
                    let mean = v.iter().sum::<f64>() / n;
                    let std = (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
                    NumericSummary {
                        min: Metric::from_f64(f.min),
                        max: Metric::from_f64(f.max),
                        mean: Metric::from_f64(mean),
                        std: Metric::from_f64(std),
                        q1: Metric::from_f64(f.q1),
                        median: Metric::from_f64(f.median),
                        q3: Metric::from_f64(f.q3),
                    }
                }
                None => NumericSummary {
                    min: Metric::Undefined,
                    max: Metric::Undefined,
                    mean: Metric::Undefined,
                    std: Metric::Undefined,
                    q1: Metric::Undefined,
                    median: Metric::Undefined,
                    q3: Metric::Undefined,
                },
            });
        }
        Kind::Categorical { classes } => {
            let mut tally: BTreeMap<&str, u64> = BTreeMap::new();
            for v in &present {
                if let Some(l) = v.as_label() {
                    *tally.entry(l).or_default() += 1;
                }
            }
            let order = |l: &str| classes.iter().position(|c| c == l).unwrap_or(usize::MAX);
            let mut top: Vec<(&str, u64)> = tally.iter().map(|(l, n)| (*l, *n)).collect();
            top.sort_by(|a, b| b.1.cmp(&a.1).then(order(a.0).cmp(&order(b.0))).then(a.0.cmp(b.0)));
            top.truncate(TOP_CLASSES);
            categorical = Some(CategoricalSummary {
                cardinality: if classes.is_empty() { tally.len() } else { classes.len() } as u64,
                top: top
                    .into_iter()
                    .map(|(l, n)| ClassCount {
                        label: l.to_string(),
                        count: CountCell::Count(n),
                    })
                    .collect(),
            });
        }
        Kind::ProbabilityVector { .. } => {}
    }
    SummaryRow {
        attribute: attribute.to_string(),
        group: d.group,
        scope: d.scope,
        kind: d.kind.name().to_string(),
        derived: d.is_derived(),
        count: CountCell::Count(count),
        missing: CountCell::Count(missing),
        numeric,
        categorical,
    }
}
