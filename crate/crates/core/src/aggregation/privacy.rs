use super::cells::{CountCell, Metric, PrivacyMeta};
use super::cooccurrence::{CooccurrenceMatrix, NpmiMatrix};
use super::distribution::Distribution;
use super::stats::{BoxplotSummary, SummaryRow};
use super::AggregateError;

/// Default minimum reportable count.
pub const DEFAULT_K: u64 = 5;

/// An aggregate whose counts can be floored.
pub trait Floored {
    /// Suppresses every count in `(0, k)` and whatever depends on it;
    /// returns how many count cells were suppressed.
    fn suppress_below(&mut self, k: u64) -> u64;

    fn privacy_mut(&mut self) -> Option<&mut PrivacyMeta>;
}

/// Applies the small-cell floor and records it in the aggregate metadata.
pub fn privacy_floor<A: Floored>(mut aggregate: A, k: u64) -> Result<A, AggregateError> {
    if k == 0 {
        return Err(AggregateError::InvalidK);
    }
    let n = aggregate.suppress_below(k);
    if let Some(meta) = aggregate.privacy_mut() {
        meta.k = meta.k.max(k);
        meta.suppressed_cells += n;
    }
    Ok(aggregate)
}

fn floor_all<'a>(cells: impl IntoIterator<Item = &'a mut CountCell>, k: u64) -> u64 {
    cells.into_iter().map(|c| c.floor(k) as u64).sum()
}

impl Floored for Distribution {
    fn suppress_below(&mut self, k: u64) -> u64 {
        let mut n = self.population.floor(k) as u64 + self.facet_missing.floor(k) as u64;
        if let Some(t) = self.ties.as_mut() {
            n += t.floor(k) as u64;
        }
        for c in &mut self.cells {
            n += c.total.floor(k) as u64 + c.missing.floor(k) as u64;
            n += floor_all(c.counts.iter_mut(), k);
        }
        n
    }

    fn privacy_mut(&mut self) -> Option<&mut PrivacyMeta> {
        Some(&mut self.privacy)
    }
}

impl Floored for BoxplotSummary {
    fn suppress_below(&mut self, k: u64) -> u64 {
        let small = self.count.count().is_some_and(|n| n > 0 && n < k);
        let n = self.count.floor(k) as u64 + self.missing.floor(k) as u64 + self.outliers.floor(k) as u64;
        if small {
            for m in self.metrics_mut() {
                *m = Metric::Suppressed;
            }
        }
        n
    }

    fn privacy_mut(&mut self) -> Option<&mut PrivacyMeta> {
        Some(&mut self.privacy)
    }
}

impl Floored for SummaryRow {
    fn suppress_below(&mut self, k: u64) -> u64 {
        let small = self.count.count().is_some_and(|n| n > 0 && n < k);
        let mut n = self.count.floor(k) as u64 + self.missing.floor(k) as u64;
        if let Some(num) = self.numeric.as_mut() {
            if small {
                for m in num.metrics_mut() {
                    *m = Metric::Suppressed;
                }
            }
        }
        if let Some(cat) = self.categorical.as_mut() {
            n += floor_all(cat.top.iter_mut().map(|c| &mut c.count), k);
        }
        n
    }

    fn privacy_mut(&mut self) -> Option<&mut PrivacyMeta> {
        None
    }
}

impl Floored for Vec<SummaryRow> {
    fn suppress_below(&mut self, k: u64) -> u64 {
        self.iter_mut().map(|r| r.suppress_below(k)).sum()
    }

    fn privacy_mut(&mut self) -> Option<&mut PrivacyMeta> {
        None
    }
}

/// Floors a joint table with its marginals; returns the number suppressed
/// and, per cell, whether anything it is computed from was suppressed.
fn floor_table(
    counts: &mut [Vec<CountCell>],
    xm: &mut [CountCell],
    ym: &mut [CountCell],
    total: &mut CountCell,
    k: u64,
) -> (u64, Vec<Vec<bool>>) {
    let mut n = total.floor(k) as u64 + floor_all(xm.iter_mut(), k) + floor_all(ym.iter_mut(), k);
    let mut hidden = Vec::with_capacity(counts.len());
    for (i, row) in counts.iter_mut().enumerate() {
        let mut h = Vec::with_capacity(row.len());
        for (j, c) in row.iter_mut().enumerate() {
            n += c.floor(k) as u64;
            h.push(c.is_suppressed() || xm[i].is_suppressed() || ym[j].is_suppressed() || total.is_suppressed());
        }
        hidden.push(h);
    }
    (n, hidden)
}

impl Floored for CooccurrenceMatrix {
    fn suppress_below(&mut self, k: u64) -> u64 {
        let (n, hidden) = floor_table(&mut self.counts, &mut self.x_marginal, &mut self.y_marginal, &mut self.carriers, k);
        for (i, row) in hidden.iter().enumerate() {
            for (j, &h) in row.iter().enumerate() {
                if h {
                    self.expected[i][j] = Metric::Suppressed;
                    self.ratio[i][j] = Metric::Suppressed;
                    self.normalized[i][j] = Metric::Suppressed;
                    self.significant[i][j] = false;
                    self.low_expectation[i][j] = false;
                }
            }
        }
        n
    }

    fn privacy_mut(&mut self) -> Option<&mut PrivacyMeta> {
        Some(&mut self.privacy)
    }
}

impl Floored for NpmiMatrix {
    fn suppress_below(&mut self, k: u64) -> u64 {
        let (n, hidden) = floor_table(&mut self.counts, &mut self.x_marginal, &mut self.y_marginal, &mut self.carriers, k);
        for (i, row) in hidden.iter().enumerate() {
            for (j, &h) in row.iter().enumerate() {
                if h {
                    self.npmi[i][j] = Metric::Suppressed;
                    self.significant[i][j] = false;
                }
            }
        }
        n
    }

    fn privacy_mut(&mut self) -> Option<&mut PrivacyMeta> {
        Some(&mut self.privacy)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::{cooccurrence, distribution, DistributionQuery, PairQuery};
    use crate::signal_model::{ingest_manifest, Dataset, Schema, SignalManifestEntry as E, Strictness, Value};
    use std::sync::Arc;

    fn dataset() -> Dataset {
        // 3 RGB, 20 grayscale, 0 RGBA
        let entries = (0..23).map(|i| {
            let mode = if i < 3 { "RGB" } else { "grayscale" };
            E::per_sample(format!("s{i:02}"), "colormode", Value::Label(mode.into()))
        });
        ingest_manifest(entries, Arc::new(Schema::builtin()), Strictness::Abort)
            .unwrap()
            .dataset
    }

    #[test]
    fn small_cells_suppressed() {
        let ds = dataset();
        let d = distribution(&ds, &DistributionQuery::new("colormode")).unwrap();
        let f = privacy_floor(d.clone(), 5).unwrap();
        assert_eq!(f.cells[0].counts, vec![CountCell::Suppressed, CountCell::Count(20)]);
        assert_eq!(f.privacy, PrivacyMeta { k: 5, suppressed_cells: 1 });
        let f = privacy_floor(d.clone(), 1).unwrap();
        assert_eq!(f.cells[0].counts, d.cells[0].counts);
        assert_eq!(f.privacy.suppressed_cells, 0);
        assert_eq!(privacy_floor(d, 0), Err(AggregateError::InvalidK));
    }

    #[test]
    fn zero_cells_survive_and_dependents_follow() {
        let entries = (0..30).map(|i| {
            let mode = match i {
                27.. => "RGBA",
                _ if i % 2 == 0 => "RGB",
                _ => "grayscale",
            };
            E::per_sample(format!("s{i:02}"), "colormode", Value::Label(mode.into()))
        });
        let ds = ingest_manifest(entries, Arc::new(Schema::builtin()), Strictness::Abort)
            .unwrap()
            .dataset;
        let m = cooccurrence(&ds, &PairQuery::new("colormode", "colormode")).unwrap();
        let f = privacy_floor(m, 5).unwrap();
        // labels RGB, RGBA (3 rows), grayscale
        assert_eq!(f.counts[0][1], CountCell::Count(0));
        assert_eq!(f.counts[1][1], CountCell::Suppressed);
        assert_eq!(f.expected[1][1], Metric::Suppressed);
        assert_eq!(f.ratio[1][0], Metric::Suppressed, "row marginal suppressed");
        assert!(!f.significant[1][1]);
        assert_eq!(f.expected[0][0].is_defined(), true);
    }

    #[test]
    fn small_boxplot_hidden() {
        let entries = (0..3).map(|i| E::per_sample(format!("s{i}"), "luminance", Value::Number(i as f64)));
        let ds = ingest_manifest(entries, Arc::new(Schema::builtin()), Strictness::Abort)
            .unwrap()
            .dataset;
        let q = crate::aggregation::BoxplotQuery {
            attribute: "luminance".into(),
            ..Default::default()
        };
        let b = privacy_floor(crate::aggregation::boxplot_summary(&ds, &q).unwrap(), 5).unwrap();
        assert_eq!(b.median, Metric::Suppressed);
        assert_eq!(b.count, CountCell::Suppressed);
        assert_eq!(b.outliers, CountCell::Count(0));
    }
}
