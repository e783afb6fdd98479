use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::params::ReportParams;
use super::ReportError;
use crate::aggregation::{
    boxplot_summary, cooccurrence, distribution, npmi, privacy_floor, resolve_thresholds, summary_table,
    BoxplotQuery, BoxplotSummary, CooccurrenceMatrix, CountCell, Distribution, DistributionQuery, Floored, Metric,
    NpmiMatrix, SummaryRow, MAX_FACETS,
};
use crate::signal_model::{Dataset, ThresholdConfig};

pub const REPORT_FORMAT: &str = "sigaudit-report/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileKind {
    Summary,
    Distribution,
    Boxplot,
    Cooccurrence,
    Npmi,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileEntry {
    pub path: String,
    pub kind: FileKind,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetIdentity {
    pub name: String,
    pub samples: CountCell,
    pub individuals: CountCell,
    pub schema_digest: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportManifest {
    pub format: String,
    pub dataset: DatasetIdentity,
    pub parameters: ReportParams,
    /// Thresholds in force for the general distributions and summary.
    pub thresholds: ThresholdConfig,
    pub files: Vec<FileEntry>,
}

/// A generated report: relative path to file bytes. Byte-identical for
/// identical dataset and parameters.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ReportBundle {
    pub files: BTreeMap<String, Vec<u8>>,
}

impl ReportBundle {
    pub fn get(&self, path: &str) -> Option<&[u8]> {
        self.files.get(path).map(Vec::as_slice)
    }

    pub fn manifest(&self) -> Result<ReportManifest, ReportError> {
        let bytes = self
            .get(MANIFEST_FILE)
            .ok_or_else(|| ReportError::Invalid(vec![format!("{MANIFEST_FILE} is missing")]))?;
        serde_json::from_slice(bytes).map_err(|e| ReportError::Invalid(vec![format!("{MANIFEST_FILE}: {e}")]))
    }

    pub fn write_to(&self, dir: &Path) -> Result<(), ReportError> {
        for (rel, bytes) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
            }
            std::fs::write(&path, bytes).map_err(|e| io_err(&path, e))?;
        }
        Ok(())
    }

    /// Loads every file the manifest lists, plus the manifest itself.
    pub fn read_from(dir: &Path) -> Result<Self, ReportError> {
        let mut bundle = Self::default();
        let path = dir.join(MANIFEST_FILE);
        bundle
            .files
            .insert(MANIFEST_FILE.into(), std::fs::read(&path).map_err(|e| io_err(&path, e))?);
        for f in bundle.manifest()?.files {
            if f.path.split('/').any(|c| c == ".." || c.is_empty()) {
                return Err(ReportError::Invalid(vec![format!("unsafe path {:?}", f.path)]));
            }
            let path = dir.join(&f.path);
            let bytes = std::fs::read(&path).map_err(|e| io_err(&path, e))?;
            bundle.files.insert(f.path, bytes);
        }
        Ok(bundle)
    }
}

fn io_err(path: &Path, e: std::io::Error) -> ReportError {
    ReportError::Io(format!("{}: {e}", path.display()))
}

/// File-name form of an attribute name.
pub fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '_' })
        .collect::<String>()
        .trim_end_matches('_')
        .to_string()
}

fn to_json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(v).expect("aggregates serialize");
    out.push(b'\n');
    out
}

fn sha256(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn check_attributes(dataset: &Dataset, names: &[&str]) -> Result<(), ReportError> {
    for n in names {
        if dataset.schema().get(n).is_none() {
            return Err(ReportError::UnknownAttribute {
                name: n.to_string(),
                valid: dataset.schema().attribute_names(),
            });
        }
    }
    Ok(())
}

/// Summary table, the general distribution of every attribute, a boxplot of
/// every numeric attribute with values, and the requested relations; all
/// floored at `params.k`.
pub fn build_report(dataset: &Dataset, params: &ReportParams) -> Result<ReportBundle, ReportError> {
    let k = params.k;
    if k == 0 {
        return Err(ReportError::Params("k must be at least 1".into()));
    }
    for d in &params.distributions {
        if d.facets.len() > MAX_FACETS {
            return Err(ReportError::TooManyFacets {
                attribute: d.attribute.clone(),
                facets: d.facets.len(),
            });
        }
        let mut names = vec![d.attribute.as_str()];
        names.extend(d.facets.iter().map(String::as_str));
        names.extend(d.filters.iter().map(|f| f.attribute.as_str()));
        check_attributes(dataset, &names)?;
    }
    for q in &params.boxplots {
        let mut names = vec![q.attribute.as_str()];
        names.extend(q.filters.iter().map(|f| f.attribute.as_str()));
        check_attributes(dataset, &names)?;
    }
    for q in params.cooccurrence.iter().chain(&params.npmi) {
        let mut names = vec![q.x.as_str(), q.y.as_str()];
        names.extend(q.filters.iter().map(|f| f.attribute.as_str()));
        check_attributes(dataset, &names)?;
    }
    let thresholds = resolve_thresholds(dataset, &params.thresholds)?;
    let schema = dataset.schema();

    let summary = privacy_floor(summary_table(dataset, &params.thresholds)?, k)?;
    let mut files: Vec<(String, FileKind, Vec<u8>)> = vec![(SUMMARY_FILE.into(), FileKind::Summary, to_json(&summary))];

    let names = schema.attribute_names();
    let general: Vec<(String, FileKind, Vec<u8>)> = names
        .par_iter()
        .map(|name| {
            let q = DistributionQuery {
                attribute: name.clone(),
                thresholds: params.thresholds.clone(),
                ..Default::default()
            };
            let d = privacy_floor(distribution(dataset, &q)?, k)?;
            Ok((format!("distributions/{}.json", slug(name)), FileKind::Distribution, to_json(&d)))
        })
        .collect::<Result<_, ReportError>>()?;
    files.extend(general);

    let numeric: Vec<&String> = names
        .iter()
        .filter(|n| schema.get(n).is_some_and(|d| d.kind.is_numeric()))
        .collect();
    let boxplots: Vec<Option<(String, FileKind, Vec<u8>)>> = numeric
        .par_iter()
        .map(|name| {
            let q = BoxplotQuery {
                attribute: (*name).clone(),
                thresholds: params.thresholds.clone(),
                ..Default::default()
            };
            match boxplot_summary(dataset, &q) {
                Ok(b) => Ok(Some((
                    format!("boxplots/{}.json", slug(name)),
                    FileKind::Boxplot,
                    to_json(&privacy_floor(b, k)?),
                ))),
                Err(crate::aggregation::AggregateError::Empty(_)) => Ok(None),
                Err(e) => Err(e.into()),
            }
        })
        .collect::<Result<_, ReportError>>()?;
    files.extend(boxplots.into_iter().flatten());

    for (i, q) in params.distributions.iter().enumerate() {
        let mut q = q.clone();
        q.thresholds = params.merged(&q.thresholds);
        let d = privacy_floor(distribution(dataset, &q)?, k)?;
        let path = format!("distributions/custom/{i:02}_{}.json", slug(&q.attribute));
        files.push((path, FileKind::Distribution, to_json(&d)));
    }
    for (i, q) in params.boxplots.iter().enumerate() {
        let mut q = q.clone();
        q.thresholds = params.merged(&q.thresholds);
        let b = privacy_floor(boxplot_summary(dataset, &q)?, k)?;
        let path = format!("boxplots/custom/{i:02}_{}.json", slug(&q.attribute));
        files.push((path, FileKind::Boxplot, to_json(&b)));
    }
    for (i, q) in params.cooccurrence.iter().enumerate() {
        let mut q = q.clone();
        q.thresholds = params.merged(&q.thresholds);
        let m = privacy_floor(cooccurrence(dataset, &q)?, k)?;
        let path = format!("cooccurrence/{i:02}_{}__{}.json", slug(&q.x), slug(&q.y));
        files.push((path, FileKind::Cooccurrence, to_json(&m)));
    }
    for (i, q) in params.npmi.iter().enumerate() {
        let mut q = q.clone();
        q.thresholds = params.merged(&q.thresholds);
        let m = privacy_floor(npmi(dataset, &q)?, k)?;
        let path = format!("npmi/{i:02}_{}__{}.json", slug(&q.x), slug(&q.y));
        files.push((path, FileKind::Npmi, to_json(&m)));
    }

    let mut seen = BTreeSet::new();
    for (path, _, _) in &files {
        if !seen.insert(path.as_str()) {
            return Err(ReportError::Params(format!("two aggregates map to {path}")));
        }
    }
    let manifest = ReportManifest {
        format: REPORT_FORMAT.into(),
        dataset: DatasetIdentity {
            name: params.name.clone().unwrap_or_else(|| schema.name().to_string()),
            samples: floored(dataset.len() as u64, k),
            individuals: floored(dataset.individual_count() as u64, k),
            schema_digest: schema.digest(),
        },
        parameters: params.clone(),
        thresholds,
        files: files
            .iter()
            .map(|(path, kind, bytes)| FileEntry {
                path: path.clone(),
                kind: *kind,
                sha256: sha256(bytes),
            })
            .collect(),
    };
    let mut bundle = ReportBundle::default();
    bundle.files.insert(MANIFEST_FILE.into(), to_json(&manifest));
    for (path, _, bytes) in files {
        bundle.files.insert(path, bytes);
    }
    Ok(bundle)
}

fn floored(n: u64, k: u64) -> CountCell {
    let mut c = CountCell::Count(n);
    c.floor(k);
    c
}

/// What validation looked at.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub files: usize,
    pub count_cells: u64,
    pub suppressed_cells: u64,
}

/// A parsed aggregate file.
#[derive(Debug, Clone, PartialEq)]
pub enum Aggregate {
    Summary(Vec<SummaryRow>),
    Distribution(Distribution),
    Boxplot(BoxplotSummary),
    Cooccurrence(CooccurrenceMatrix),
    Npmi(NpmiMatrix),
}

impl Aggregate {
    pub fn parse(kind: FileKind, bytes: &[u8]) -> Result<Self, serde_json::Error> {
        Ok(match kind {
            FileKind::Summary => Aggregate::Summary(serde_json::from_slice(bytes)?),
            FileKind::Distribution => Aggregate::Distribution(serde_json::from_slice(bytes)?),
            FileKind::Boxplot => Aggregate::Boxplot(serde_json::from_slice(bytes)?),
            FileKind::Cooccurrence => Aggregate::Cooccurrence(serde_json::from_slice(bytes)?),
            FileKind::Npmi => Aggregate::Npmi(serde_json::from_slice(bytes)?),
        })
    }

    /// Count cells that the floor at `k` would still suppress; zero on a
    /// correctly floored aggregate.
    fn leaks(&self, k: u64) -> u64 {
        match self.clone() {
            Aggregate::Summary(mut a) => a.suppress_below(k),
            Aggregate::Distribution(mut a) => a.suppress_below(k),
            Aggregate::Boxplot(mut a) => a.suppress_below(k),
            Aggregate::Cooccurrence(mut a) => a.suppress_below(k),
            Aggregate::Npmi(mut a) => a.suppress_below(k),
        }
    }

    fn hidden_numbers_visible(&self) -> bool {
        let hidden = |c: &CountCell, ms: &[&Metric]| c.is_suppressed() && ms.iter().any(|m| m.is_defined());
        match self {
            Aggregate::Summary(rows) => rows.iter().any(|r| {
                r.numeric.as_ref().is_some_and(|n| {
                    hidden(&r.count, &[&n.min, &n.max, &n.mean, &n.std, &n.q1, &n.median, &n.q3])
                })
            }),
            Aggregate::Boxplot(b) => hidden(&b.count, &[&b.min, &b.q1, &b.median, &b.q3, &b.max]),
            Aggregate::Cooccurrence(m) => m.counts.iter().zip(&m.ratio).any(|(cr, rr)| {
                cr.iter().zip(rr).any(|(c, r)| c.is_suppressed() && r.is_defined())
            }),
            Aggregate::Npmi(m) => m.counts.iter().zip(&m.npmi).any(|(cr, nr)| {
                cr.iter().zip(nr).any(|(c, n)| c.is_suppressed() && n.is_defined())
            }),
            Aggregate::Distribution(_) => false,
        }
    }
}

fn count_cells(v: &serde_json::Value, total: &mut u64, suppressed: &mut u64) {
    match v {
        serde_json::Value::String(s) if s == "suppressed" => *suppressed += 1,
        serde_json::Value::Array(a) => a.iter().for_each(|x| count_cells(x, total, suppressed)),
        serde_json::Value::Object(o) => o.values().for_each(|x| count_cells(x, total, suppressed)),
        serde_json::Value::Number(n) if n.is_u64() => *total += 1,
        _ => {}
    }
}

fn strings<'a>(v: &'a serde_json::Value, out: &mut Vec<&'a str>) {
    match v {
        serde_json::Value::String(s) => out.push(s),
        serde_json::Value::Array(a) => a.iter().for_each(|x| strings(x, out)),
        serde_json::Value::Object(o) => {
            for (key, x) in o {
                out.push(key);
                strings(x, out);
            }
        }
        _ => {}
    }
}

/// Checks a bundle against the report format: typed parse of every file
/// with unknown fields rejected, digests, the floor at the manifest's `k`,
/// and, when `sample_ids` is given, that no string in any file equals one.
pub fn validate_bundle(bundle: &ReportBundle, sample_ids: Option<&BTreeSet<String>>) -> Result<ValidationSummary, ReportError> {
    let manifest = bundle.manifest()?;
    let mut problems = Vec::new();
    if manifest.format != REPORT_FORMAT {
        problems.push(format!("unsupported format {:?}", manifest.format));
    }
    let k = manifest.parameters.k;
    for (what, c) in [("samples", manifest.dataset.samples), ("individuals", manifest.dataset.individuals)] {
        if c.count().is_some_and(|n| n > 0 && n < k) {
            problems.push(format!("{MANIFEST_FILE}: dataset {what} below k = {k}"));
        }
    }
    let mut summary = ValidationSummary::default();
    let listed: BTreeSet<&str> = manifest.files.iter().map(|f| f.path.as_str()).collect();
    for path in bundle.files.keys() {
        if path != MANIFEST_FILE && !listed.contains(path.as_str()) {
            problems.push(format!("{path}: not listed in the manifest"));
        }
    }
    for f in &manifest.files {
        let Some(bytes) = bundle.get(&f.path) else {
            problems.push(format!("{}: missing", f.path));
            continue;
        };
        summary.files += 1;
        if sha256(bytes) != f.sha256 {
            problems.push(format!("{}: digest mismatch", f.path));
        }
        let agg = match Aggregate::parse(f.kind, bytes) {
            Ok(a) => a,
            Err(e) => {
                problems.push(format!("{}: {e}", f.path));
                continue;
            }
        };
        let leaks = agg.leaks(k);
        if leaks > 0 {
            problems.push(format!("{}: {leaks} counts below k = {k}", f.path));
        }
        if agg.hidden_numbers_visible() {
            problems.push(format!("{}: statistics of a suppressed count are visible", f.path));
        }
        let json: serde_json::Value = serde_json::from_slice(bytes).expect("parsed above");
        count_cells(&json, &mut summary.count_cells, &mut summary.suppressed_cells);
        if let Some(ids) = sample_ids {
            let mut s = Vec::new();
            strings(&json, &mut s);
            if let Some(hit) = s.iter().find(|s| ids.contains(**s)) {
                problems.push(format!("{}: contains sample identifier {hit:?}", f.path));
            }
        }
    }
    if problems.is_empty() {
        Ok(summary)
    } else {
        Err(ReportError::Invalid(problems))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aggregation::PairQuery;
    use crate::signal_model::{ingest_manifest, Schema, SignalManifestEntry as E, Strictness, Value};
    use std::sync::Arc;

    fn dataset() -> Dataset {
        let mut entries = Vec::new();
        for i in 0..60 {
            let id = format!("img_{i:03}.jpg");
            entries.push(E::per_sample(&id, "nsfw", Value::Number((i % 10) as f64 / 10.0)));
            entries.push(E::per_sample(&id, "luminance", Value::Number(i as f64)));
            entries.push(E::per_sample(&id, "colormode", Value::Label(if i < 58 { "RGB" } else { "grayscale" }.into())));
            entries.push(E::per_individual(&id, "gender", 0, Value::Number(if i % 3 == 0 { 0.9 } else { 0.2 })));
        }
        ingest_manifest(entries, Arc::new(Schema::builtin()), Strictness::Abort)
            .unwrap()
            .dataset
    }

    fn ids(ds: &Dataset) -> BTreeSet<String> {
        ds.samples().iter().map(|s| s.sample_id.clone()).collect()
    }

    #[test]
    fn default_bundle_validates() {
        let ds = dataset();
        let b = build_report(&ds, &ReportParams::default()).unwrap();
        let m = b.manifest().unwrap();
        assert_eq!(m.dataset.samples, CountCell::Count(60));
        assert!(b.get("distributions/nsfw_class.json").is_some());
        assert!(b.get("distributions/object_count_person.json").is_some());
        assert!(b.get("boxplots/luminance.json").is_some());
        assert!(b.get("boxplots/brisque.json").is_none());
        let v = validate_bundle(&b, Some(&ids(&ds))).unwrap();
        assert!(v.suppressed_cells > 0, "two grayscale samples");
        assert_eq!(v.files, m.files.len());
    }

    #[test]
    fn deterministic() {
        let ds = dataset();
        let mut p = ReportParams::default();
        p.cooccurrence.push(PairQuery::new("colormode", "gender_class"));
        p.npmi.push(PairQuery::new("gender_class", "nsfw_class"));
        let a = build_report(&ds, &p).unwrap();
        let b = build_report(&ds, &p).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_parameters() {
        let ds = dataset();
        let mut p = ReportParams::default();
        p.distributions.push(DistributionQuery {
            attribute: "nsfw".into(),
            facets: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            ..Default::default()
        });
        assert!(matches!(build_report(&ds, &p), Err(ReportError::TooManyFacets { facets: 4, .. })));
        let mut p = ReportParams::default();
        p.npmi.push(PairQuery::new("nsfw_class", "nope"));
        let e = build_report(&ds, &p).unwrap_err();
        assert!(e.to_string().contains("nope") && e.to_string().contains("gender_class"));
    }

    #[test]
    fn detects_tampering() {
        let ds = dataset();
        let mut b = build_report(&ds, &ReportParams::default()).unwrap();
        let path = "distributions/colormode.json".to_string();
        let text = String::from_utf8(b.files[&path].clone()).unwrap();
        let leaked = text.replacen("\"suppressed\"", "2", 1);
        b.files.insert(path.clone(), leaked.into_bytes());
        let Err(ReportError::Invalid(p)) = validate_bundle(&b, None) else {
            panic!("expected failure")
        };
        assert!(p.iter().any(|m| m.contains("digest")));
        assert!(p.iter().any(|m| m.contains("below k")));

        let mut b = build_report(&ds, &ReportParams::default()).unwrap();
        let text = String::from_utf8(b.files[&path].clone()).unwrap();
        b.files.insert(path, text.replacen("\"RGB\"", "\"img_001.jpg\"", 1).into_bytes());
        let Err(ReportError::Invalid(p)) = validate_bundle(&b, Some(&ids(&ds))) else {
            panic!("expected failure")
        };
        assert!(p.iter().any(|m| m.contains("sample identifier")));
    }

    #[test]
    fn round_trips_through_disk() {
        let ds = dataset();
        let b = build_report(&ds, &ReportParams::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        b.write_to(dir.path()).unwrap();
        assert_eq!(ReportBundle::read_from(dir.path()).unwrap(), b);
    }
}
