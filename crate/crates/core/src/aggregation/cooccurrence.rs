use serde::{Deserialize, Serialize};

use super::cells::{CountCell, Metric, PrivacyMeta};
use super::query::{Normalization, PairQuery, Unit};
use super::quantize::Z_95;
use super::rows::{Axis, Rows};
use super::AggregateError;
use crate::signal_model::Dataset;

/// Expected counts below this are never flagged.
pub const MIN_EXPECTED: f64 = 5.0;

/// `C~[x][y] = c * P(x) * P(y)` with marginals taken from the table itself.
pub fn expected_counts(counts: &[Vec<u64>]) -> Vec<Vec<f64>> {
    let (rows, cols, c) = marginals(counts);
    if c == 0 {
        return counts.iter().map(|r| vec![0.0; r.len()]).collect();
    }
    let c = c as f64;
    rows.iter()
        .map(|&rx| cols.iter().map(|&cy| rx as f64 * cy as f64 / c).collect())
        .collect()
}

fn marginals(counts: &[Vec<u64>]) -> (Vec<u64>, Vec<u64>, u64) {
    let n_cols = counts.first().map_or(0, Vec::len);
    let rows: Vec<u64> = counts.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<u64> = (0..n_cols).map(|j| counts.iter().map(|r| r[j]).sum()).collect();
    let c = rows.iter().sum();
    (rows, cols, c)
}

/// Cell is significant iff `|C - C~| > 1.96 sqrt(C~)`. Cells with `C~ < 5`
/// are never significant and come back flagged in the second matrix.
pub fn significance_mask(counts: &[Vec<u64>], expected: &[Vec<f64>]) -> (Vec<Vec<bool>>, Vec<Vec<bool>>) {
    let mut sig = Vec::with_capacity(counts.len());
    let mut low = Vec::with_capacity(counts.len());
    for (cr, er) in counts.iter().zip(expected) {
        let mut s = Vec::with_capacity(cr.len());
        let mut l = Vec::with_capacity(cr.len());
        for (&c, &e) in cr.iter().zip(er) {
            let too_low = e < MIN_EXPECTED;
            l.push(too_low);
            s.push(!too_low && (c as f64 - e).abs() > Z_95 * e.sqrt());
        }
        sig.push(s);
        low.push(l);
    }
    (sig, low)
}

/// `ln(P(x,y) / (P(x) P(y))) / -ln P(y)` from joint counts. `None` where the
/// joint count is zero or `P(y) = 1`.
pub fn npmi_table(counts: &[Vec<u64>]) -> Vec<Vec<Option<f64>>> {
    let (rows, cols, c) = marginals(counts);
    let cf = c as f64;
    counts
        .iter()
        .zip(&rows)
        .map(|(r, &cx)| {
            r.iter()
                .zip(&cols)
                .map(|(&cxy, &cy)| {
                    if cxy == 0 || cy == c {
                        return None;
                    }
                    let num = ((cxy as f64 * cf) / (cx as f64 * cy as f64)).ln();
                    Some(num / (cf / cy as f64).ln())
                })
                .collect()
        })
        .collect()
}

pub fn normalize(counts: &[Vec<u64>], how: Normalization) -> Vec<Vec<Metric>> {
    let (rows, cols, c) = marginals(counts);
    let div = |n: u64, d: u64| if d == 0 { Metric::Undefined } else { Metric::Value(n as f64 / d as f64) };
    counts
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.iter()
                .enumerate()
                .map(|(j, &n)| match how {
                    Normalization::Raw => Metric::Value(n as f64),
                    Normalization::Row => div(n, rows[i]),
                    Normalization::Column => div(n, cols[j]),
                    Normalization::Total => div(n, c),
                })
                .collect()
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CooccurrenceMatrix {
    pub query: PairQuery,
    pub unit: Unit,
    /// Filtered rows carrying both attributes; the total `c`.
    pub carriers: CountCell,
    pub x: Axis,
    pub y: Axis,
    /// `counts[i][j]`: rows at level `i` of x and `j` of y.
    pub counts: Vec<Vec<CountCell>>,
    pub x_marginal: Vec<CountCell>,
    pub y_marginal: Vec<CountCell>,
    pub expected: Vec<Vec<Metric>>,
    /// `C / C~`, defined where `C~ > 0`.
    pub ratio: Vec<Vec<Metric>>,
    pub significant: Vec<Vec<bool>>,
    pub low_expectation: Vec<Vec<bool>>,
    pub normalized: Vec<Vec<Metric>>,
    pub privacy: PrivacyMeta,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NpmiMatrix {
    pub query: PairQuery,
    pub unit: Unit,
    pub carriers: CountCell,
    pub x: Axis,
    pub y: Axis,
    pub counts: Vec<Vec<CountCell>>,
    pub x_marginal: Vec<CountCell>,
    pub y_marginal: Vec<CountCell>,
    /// Normalized by `-ln P(y)`.
    pub npmi: Vec<Vec<Metric>>,
    /// Same rule as the co-occurrence mask.
    pub significant: Vec<Vec<bool>>,
    pub privacy: PrivacyMeta,
}

struct Joint {
    unit: Unit,
    x: Axis,
    y: Axis,
    counts: Vec<Vec<u64>>,
}

fn joint(dataset: &Dataset, query: &PairQuery) -> Result<Joint, AggregateError> {
    let rows = Rows::build(dataset, &query.thresholds, &[&query.x, &query.y], &query.filters)?;
    let carriers: Vec<usize> = rows
        .selected
        .iter()
        .copied()
        .filter(|&r| rows.value(&query.x, r).is_some() && rows.value(&query.y, r).is_some())
        .collect();
    let (x, xc) = rows.encode(&query.x, &carriers)?;
    let (y, yc) = rows.encode(&query.y, &carriers)?;
    let mut counts = vec![vec![0u64; y.len()]; x.len()];
    for (a, b) in xc.iter().zip(&yc) {
        if let (Some(a), Some(b)) = (a, b) {
            counts[*a][*b] += 1;
        }
    }
    Ok(Joint {
        unit: rows.unit,
        x,
        y,
        counts,
    })
}

fn cells(m: &[Vec<u64>]) -> Vec<Vec<CountCell>> {
    m.iter().map(|r| r.iter().map(|&n| CountCell::Count(n)).collect()).collect()
}

fn cell_vec(v: &[u64]) -> Vec<CountCell> {
    v.iter().map(|&n| CountCell::Count(n)).collect()
}

/// Co-occurrence of two discrete (or quantized) attributes over the rows that
/// carry both, with expected counts and the 95% significance mask.
pub fn cooccurrence(dataset: &Dataset, query: &PairQuery) -> Result<CooccurrenceMatrix, AggregateError> {
    let j = joint(dataset, query)?;
    let expected = expected_counts(&j.counts);
    let (significant, low_expectation) = significance_mask(&j.counts, &expected);
    let ratio = j
        .counts
        .iter()
        .zip(&expected)
        .map(|(cr, er)| {
            cr.iter()
                .zip(er)
                .map(|(&c, &e)| if e > 0.0 { Metric::Value(c as f64 / e) } else { Metric::Undefined })
                .collect()
        })
        .collect();
    let (rows, cols, c) = marginals(&j.counts);
    Ok(CooccurrenceMatrix {
        query: query.clone(),
        unit: j.unit,
        carriers: CountCell::Count(c),
        counts: cells(&j.counts),
        x_marginal: cell_vec(&rows),
        y_marginal: cell_vec(&cols),
        expected: expected.iter().map(|r| r.iter().map(|&e| Metric::Value(e)).collect()).collect(),
        ratio,
        significant,
        low_expectation,
        normalized: normalize(&j.counts, query.normalization),
        x: j.x,
        y: j.y,
        privacy: PrivacyMeta { k: 1, suppressed_cells: 0 },
    })
}

/// nPMI normalized by `P(y)` over the rows that carry both attributes.
pub fn npmi(dataset: &Dataset, query: &PairQuery) -> Result<NpmiMatrix, AggregateError> {
    let j = joint(dataset, query)?;
    let (rows, cols, c) = marginals(&j.counts);
    let (significant, _) = significance_mask(&j.counts, &expected_counts(&j.counts));
    Ok(NpmiMatrix {
        significant,
        query: query.clone(),
        unit: j.unit,
        carriers: CountCell::Count(c),
        npmi: npmi_table(&j.counts)
            .into_iter()
            .map(|r| r.into_iter().map(Metric::from).collect())
            .collect(),
        counts: cells(&j.counts),
        x_marginal: cell_vec(&rows),
        y_marginal: cell_vec(&cols),
        x: j.x,
        y: j.y,
        privacy: PrivacyMeta { k: 1, suppressed_cells: 0 },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_model::{ingest_manifest, Schema, SignalManifestEntry as E, Strictness, Value};
    use proptest::prelude::*;
    use std::sync::Arc;

    #[test]
    fn expected_direct_formula() {
        // c = 100, row 0 has 50, column 0 has 40
        let t = vec![vec![30, 20], vec![10, 40]];
        let e = expected_counts(&t);
        assert_eq!(e[0][0], 20.0);
        let total: f64 = e.iter().flatten().sum();
        assert!((total - 100.0).abs() < 1e-9);
    }

    #[test]
    fn poisson_rule() {
        let (sig, low) = significance_mask(&[vec![30]], &[vec![20.0]]);
        assert!(sig[0][0] && !low[0][0]);
        let (sig, _) = significance_mask(&[vec![28]], &[vec![20.0]]);
        assert!(!sig[0][0], "8 < 1.96 sqrt(20) = 8.765");
        let (sig, low) = significance_mask(&[vec![40]], &[vec![4.9]]);
        assert!(!sig[0][0] && low[0][0]);
        let (sig, _) = significance_mask(&[vec![20, 7]], &[vec![20.0, 7.0]]);
        assert_eq!(sig, vec![vec![false, false]]);
    }

    #[test]
    fn npmi_hand_table() {
        // c = 10; P(x0) = .4, P(y0) = .5, P(x0,y0) = .3 -> log2(1.5)
        let t = vec![vec![3, 1], vec![2, 4]];
        let n = npmi_table(&t);
        let oracle = |pxy: f64, px: f64, py: f64| (pxy / (px * py)).ln() / -py.ln();
        assert!((n[0][0].unwrap() - oracle(0.3, 0.4, 0.5)).abs() < 1e-12);
        assert!((n[0][1].unwrap() - oracle(0.1, 0.4, 0.5)).abs() < 1e-12);
        assert!((n[1][0].unwrap() - oracle(0.2, 0.6, 0.5)).abs() < 1e-12);
        assert!((n[1][1].unwrap() - oracle(0.4, 0.6, 0.5)).abs() < 1e-12);
        assert!((n[0][0].unwrap() - 0.584_962_500_721_156).abs() < 1e-12);
    }

    #[test]
    fn npmi_undefined_cells() {
        let n = npmi_table(&[vec![5, 0], vec![0, 5]]);
        assert_eq!(n[0][1], None);
        assert_eq!(n[0][0], Some(1.0));
        // P(y) = 1 in the only column
        assert_eq!(npmi_table(&[vec![3], vec![2]]), vec![vec![None], vec![None]]);
    }

    #[test]
    fn identity_diagonal_exact() {
        for c in [4u64, 400, 100_000] {
            let t: Vec<Vec<u64>> = (0..4).map(|i| (0..4).map(|j| if i == j { c / 4 } else { 0 }).collect()).collect();
            let n = npmi_table(&t);
            for (i, row) in n.iter().enumerate() {
                assert_eq!(row[i], Some(1.0));
            }
        }
    }

    #[test]
    fn normalizations() {
        let t = vec![vec![1, 3], vec![0, 0]];
        let r = normalize(&t, Normalization::Row);
        assert_eq!(r[0], vec![Metric::Value(0.25), Metric::Value(0.75)]);
        assert_eq!(r[1], vec![Metric::Undefined, Metric::Undefined]);
        let c = normalize(&t, Normalization::Column);
        assert_eq!(c[1][0], Metric::Value(0.0));
        assert_eq!(c[0][1], Metric::Value(1.0));
        assert_eq!(normalize(&t, Normalization::Total)[0][1], Metric::Value(0.75));
    }

    fn dataset() -> Dataset {
        let mut entries = Vec::new();
        for i in 0..40 {
            let id = format!("s{i:02}");
            let mode = ["RGB", "grayscale", "RGBA"][i % 3];
            entries.push(E::per_sample(&id, "colormode", Value::Label(mode.into())));
            if i % 4 != 0 {
                entries.push(E::per_sample(&id, "nsfw", Value::Number((i as f64) / 40.0)));
            }
        }
        ingest_manifest(entries, Arc::new(Schema::builtin()), Strictness::Abort)
            .unwrap()
            .dataset
    }

    #[test]
    fn dataset_level() {
        let ds = dataset();
        let m = cooccurrence(&ds, &PairQuery::new("colormode", "nsfw_class")).unwrap();
        assert_eq!(m.carriers, CountCell::Count(30));
        assert_eq!(m.x.labels, vec!["RGB", "RGBA", "grayscale"]);
        let raw: u64 = m.counts.iter().flatten().map(|c| c.count().unwrap()).sum();
        assert_eq!(raw, 30);

        let same = cooccurrence(&ds, &PairQuery::new("colormode", "colormode")).unwrap();
        for (i, row) in same.counts.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                if i != j {
                    assert_eq!(*c, CountCell::Count(0));
                }
            }
        }
        let t = cooccurrence(&ds, &PairQuery::new("nsfw_class", "colormode")).unwrap();
        for i in 0..3 {
            for j in 0..2 {
                assert_eq!(m.counts[i][j], t.counts[j][i]);
            }
        }
        let n = npmi(&ds, &PairQuery::new("colormode", "colormode")).unwrap();
        assert_eq!(n.npmi[0][0], Metric::Value(1.0));
        assert_eq!(n.npmi[0][1], Metric::Undefined);
        assert!(npmi(&ds, &PairQuery::new("age", "nsfw")).is_err());
    }

    proptest! {
        #[test]
        fn expected_sums_and_row_normalization(t in prop::collection::vec(prop::collection::vec(0u64..50, 3), 1..6)) {
            let c: u64 = t.iter().flatten().sum();
            let e = expected_counts(&t);
            if c > 0 {
                let s: f64 = e.iter().flatten().sum();
                prop_assert!((s - c as f64).abs() < 1e-6);
            }
            for (row, raw) in normalize(&t, Normalization::Row).iter().zip(&t) {
                if raw.iter().sum::<u64>() > 0 {
                    let s: f64 = row.iter().map(|m| m.value().unwrap()).sum();
                    prop_assert!((s - 1.0).abs() < 1e-9);
                }
            }
        }
    }
}
