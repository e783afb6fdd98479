use std::collections::BTreeMap;
use std::fmt;
use std::io::BufRead;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::dataset::{Dataset, IndividualRecord, SampleRecord};
use super::descriptor::{KindViolation, Scope};
use super::schema::Schema;
use super::value::{BoxRect, ImageDims, Value};

/// One line of a signal manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalManifestEntry {
    pub sample_id: String,
    pub attribute: String,
    pub scope: Scope,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub individual_index: Option<u32>,
    pub value: Value,
    #[serde(default, rename = "box", skip_serializing_if = "Option::is_none")]
    pub bbox: Option<BoxRect>,
}

impl SignalManifestEntry {
    pub fn per_sample(sample_id: impl Into<String>, attribute: impl Into<String>, value: Value) -> Self {
        Self {
            sample_id: sample_id.into(),
            attribute: attribute.into(),
            scope: Scope::PerSample,
            individual_index: None,
            value,
            bbox: None,
        }
    }

    pub fn per_individual(
        sample_id: impl Into<String>,
        attribute: impl Into<String>,
        individual_index: u32,
        value: Value,
    ) -> Self {
        Self {
            sample_id: sample_id.into(),
            attribute: attribute.into(),
            scope: Scope::PerIndividual,
            individual_index: Some(individual_index),
            value,
            bbox: None,
        }
    }

    pub fn with_box(mut self, bbox: BoxRect) -> Self {
        self.bbox = Some(bbox);
        self
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strictness {
    /// Stop at the first malformed entry.
    #[default]
    Abort,
    /// Skip malformed entries and report them.
    Skip,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EntryErrorKind {
    #[error("line is not a valid manifest entry: {0}")]
    Malformed(String),
    #[error("attribute is not in the schema")]
    UnknownAttribute,
    #[error("attribute is derived and cannot be ingested")]
    DerivedAttribute,
    #[error("entry scope {found} does not match attribute scope {expected}")]
    ScopeMismatch { expected: Scope, found: Scope },
    #[error("per_individual entry lacks individual_index")]
    MissingIndex,
    #[error("per_sample entry carries an individual_index")]
    UnexpectedIndex,
    #[error("{0}")]
    Value(#[from] KindViolation),
    #[error("box is only allowed on per_individual entries")]
    BoxOnSample,
    #[error("box has a zero or negative side")]
    DegenerateBox,
    #[error("conflicting duplicate signal")]
    Duplicate,
    #[error("conflicting boxes for the same individual")]
    ConflictingBox,
    #[error("image {0} must be a positive integer")]
    BadDimension(&'static str),
    #[error("box given but the sample has no width/height")]
    MissingDims,
    #[error("box lies outside the image")]
    BoxOutOfBounds,
}

/// An ingestion failure located in its manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, thiserror::Error)]
pub struct EntryError {
    pub file: String,
    pub line: usize,
    pub sample_id: Option<String>,
    pub attribute: Option<String>,
    pub message: String,
}

impl fmt::Display for EntryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.file, self.line)?;
        if let Some(s) = &self.sample_id {
            write!(f, " sample {s:?}")?;
        }
        if let Some(a) = &self.attribute {
            write!(f, " attribute {a:?}")?;
        }
        write!(f, ": {}", self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IngestReport {
    pub lines_read: usize,
    pub entries_accepted: usize,
    pub skipped: Vec<EntryError>,
}

#[derive(Debug, Clone)]
pub struct IngestOutcome {
    pub dataset: Dataset,
    pub report: IngestReport,
}

#[derive(Debug, Clone)]
struct Origin {
    source: Arc<str>,
    line: usize,
}

#[derive(Debug, Clone)]
struct Slot {
    value: Value,
    bbox: Option<BoxRect>,
    origin: Origin,
    conflict: bool,
}

type SlotKey = (String, Option<u32>, String);

/// Accumulates manifest entries; single writer, produces an immutable
/// [`Dataset`] on [`finish`](Ingestor::finish).
pub struct Ingestor {
    schema: Arc<Schema>,
    strictness: Strictness,
    slots: BTreeMap<SlotKey, Slot>,
    report: IngestReport,
}

impl Ingestor {
    pub fn new(schema: Arc<Schema>, strictness: Strictness) -> Self {
        Self {
            schema,
            strictness,
            slots: BTreeMap::new(),
            report: IngestReport::default(),
        }
    }

    fn fail(
        &mut self,
        origin: &Origin,
        entry: Option<&SignalManifestEntry>,
        kind: EntryErrorKind,
    ) -> Result<(), EntryError> {
        let err = EntryError {
            file: origin.source.to_string(),
            line: origin.line,
            sample_id: entry.map(|e| e.sample_id.clone()),
            attribute: entry.map(|e| e.attribute.clone()),
            message: kind.to_string(),
        };
        match self.strictness {
            Strictness::Abort => Err(err),
            Strictness::Skip => {
                self.report.skipped.push(err);
                Ok(())
            }
        }
    }

    /// Reads a line-delimited manifest. Blank lines are ignored.
    pub fn read<R: BufRead>(&mut self, reader: R, source: &str) -> Result<(), EntryError> {
        let source: Arc<str> = Arc::from(source);
        for (i, line) in reader.lines().enumerate() {
            let origin = Origin {
                source: Arc::clone(&source),
                line: i + 1,
            };
            let line = match line {
                Ok(l) => l,
                Err(e) => {
                    self.report.lines_read += 1;
                    self.fail(&origin, None, EntryErrorKind::Malformed(e.to_string()))?;
                    continue;
                }
            };
            if line.trim().is_empty() {
                continue;
            }
            self.report.lines_read += 1;
            match serde_json::from_str::<SignalManifestEntry>(&line) {
                Ok(entry) => self.push_at(entry, origin)?,
                Err(e) => self.fail(&origin, None, EntryErrorKind::Malformed(e.to_string()))?,
            }
        }
        Ok(())
    }

    /// Adds one entry; `line` is reported in errors.
    pub fn push(&mut self, entry: SignalManifestEntry, source: &str, line: usize) -> Result<(), EntryError> {
        self.report.lines_read += 1;
        self.push_at(
            entry,
            Origin {
                source: Arc::from(source),
                line,
            },
        )
    }

    fn push_at(&mut self, entry: SignalManifestEntry, origin: Origin) -> Result<(), EntryError> {
        if let Err(kind) = self.check(&entry) {
            return self.fail(&origin, Some(&entry), kind);
        }
        let key = (
            entry.sample_id.clone(),
            entry.individual_index,
            entry.attribute.clone(),
        );
        match self.slots.get_mut(&key) {
            None => {
                self.slots.insert(
                    key,
                    Slot {
                        value: entry.value,
                        bbox: entry.bbox,
                        origin,
                        conflict: false,
                    },
                );
                self.report.entries_accepted += 1;
                Ok(())
            }
            Some(slot) if slot.value == entry.value && slot.bbox == entry.bbox => Ok(()),
            Some(slot) => {
                slot.conflict = true;
                self.fail(&origin, Some(&entry), EntryErrorKind::Duplicate)
            }
        }
    }

    fn check(&self, e: &SignalManifestEntry) -> Result<(), EntryErrorKind> {
        let d = self
            .schema
            .get(&e.attribute)
            .ok_or(EntryErrorKind::UnknownAttribute)?;
        if d.is_derived() {
            return Err(EntryErrorKind::DerivedAttribute);
        }
        if d.scope != e.scope {
            return Err(EntryErrorKind::ScopeMismatch {
                expected: d.scope,
                found: e.scope,
            });
        }
        match (e.scope, e.individual_index) {
            (Scope::PerIndividual, None) => return Err(EntryErrorKind::MissingIndex),
            (Scope::PerSample, Some(_)) => return Err(EntryErrorKind::UnexpectedIndex),
            _ => {}
        }
        d.kind.check(&e.value)?;
        if let Some(b) = &e.bbox {
            if e.scope == Scope::PerSample {
                return Err(EntryErrorKind::BoxOnSample);
            }
            if b.is_degenerate() || !b.x.is_finite() || !b.y.is_finite() {
                return Err(EntryErrorKind::DegenerateBox);
            }
        }
        if e.scope == Scope::PerSample && (e.attribute == "width" || e.attribute == "height") {
            let v = e.value.as_number().unwrap_or(f64::NAN);
            if !(v >= 1.0 && v.fract() == 0.0 && v <= u32::MAX as f64) {
                return Err(EntryErrorKind::BadDimension(if e.attribute == "width" {
                    "width"
                } else {
                    "height"
                }));
            }
        }
        Ok(())
    }

    /// Groups accepted entries into records.
    pub fn finish(mut self) -> Result<IngestOutcome, EntryError> {
        let slots = std::mem::take(&mut self.slots);
        let face_attr = self.schema.face_attribute().to_string();
        let mut samples: BTreeMap<String, SampleRecord> = BTreeMap::new();
        let mut individuals: BTreeMap<(String, u32), (IndividualRecord, Option<Origin>)> = BTreeMap::new();

        for ((sample_id, idx, attribute), slot) in slots {
            if slot.conflict {
                // Conflicts were already reported; in skip mode every entry
                // for the key is dropped so the result does not depend on order.
                self.report.entries_accepted -= 1;
                continue;
            }
            let sample = samples
                .entry(sample_id.clone())
                .or_insert_with(|| SampleRecord::new(sample_id.clone()));
            match idx {
                None => {
                    sample.signal_values.insert(attribute, slot.value);
                }
                Some(i) => {
                    let (ind, box_origin) = individuals
                        .entry((sample_id.clone(), i))
                        .or_insert_with(|| (IndividualRecord::new(i), None));
                    if let Some(b) = slot.bbox {
                        match ind.bbox {
                            Some(existing) if existing != b => {
                                let entry = SignalManifestEntry {
                                    sample_id: sample_id.clone(),
                                    attribute: attribute.clone(),
                                    scope: Scope::PerIndividual,
                                    individual_index: Some(i),
                                    value: slot.value.clone(),
                                    bbox: Some(b),
                                };
                                self.fail(&slot.origin, Some(&entry), EntryErrorKind::ConflictingBox)?;
                                ind.bbox = None;
                            }
                            _ => {
                                ind.bbox = Some(b);
                                *box_origin = Some(slot.origin.clone());
                            }
                        }
                    }
                    if attribute == face_attr {
                        ind.face_probability = slot.value.as_number();
                    }
                    ind.signal_values.insert(attribute, slot.value);
                }
            }
        }

        for ((sample_id, _), (mut ind, box_origin)) in individuals {
            let sample = samples.get_mut(&sample_id).expect("sample exists");
            if sample.image_dims.is_none() {
                sample.image_dims = dims_of(sample);
            }
            if let (Some(b), Some(origin)) = (ind.bbox, box_origin) {
                let problem = match sample.image_dims {
                    None => Some(EntryErrorKind::MissingDims),
                    Some(d) if !b.fits_within(d) => Some(EntryErrorKind::BoxOutOfBounds),
                    Some(d) => {
                        ind.absolute_area = Some(b.area());
                        ind.relative_area = Some(b.area() / d.pixel_count() as f64);
                        None
                    }
                };
                if let Some(kind) = problem {
                    let entry = SignalManifestEntry {
                        sample_id: sample_id.clone(),
                        attribute: String::from("box"),
                        scope: Scope::PerIndividual,
                        individual_index: Some(ind.individual_index),
                        value: Value::Vector(Vec::new()),
                        bbox: Some(b),
                    };
                    self.fail(&origin, Some(&entry), kind)?;
                    ind.bbox = None;
                }
            }
            sample.individuals.push(ind);
        }
        let mut records: Vec<SampleRecord> = samples.into_values().collect();
        for s in &mut records {
            if s.image_dims.is_none() {
                s.image_dims = dims_of(s);
            }
        }
        Ok(IngestOutcome {
            dataset: Dataset::from_records(self.schema, records),
            report: self.report,
        })
    }
}

fn dims_of(sample: &SampleRecord) -> Option<ImageDims> {
    let w = sample.get("width")?.as_number()?;
    let h = sample.get("height")?.as_number()?;
    Some(ImageDims {
        width: w as u32,
        height: h as u32,
    })
}

/// Ingests a stream of entries in one call.
pub fn ingest_manifest<I>(entries: I, schema: Arc<Schema>, strictness: Strictness) -> Result<IngestOutcome, EntryError>
where
    I: IntoIterator<Item = SignalManifestEntry>,
{
    let mut ing = Ingestor::new(schema, strictness);
    for (i, e) in entries.into_iter().enumerate() {
        ing.push(e, "<entries>", i + 1)?;
    }
    ing.finish()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_model::Schema;

    fn schema() -> Arc<Schema> {
        Arc::new(Schema::builtin())
    }

    #[test]
    fn groups_entries_into_one_sample() {
        let out = ingest_manifest(
            vec![
                SignalManifestEntry::per_sample("a", "nsfw", Value::Number(0.2)),
                SignalManifestEntry::per_sample("a", "luminance", Value::Number(40.0)),
                SignalManifestEntry::per_individual("a", "child", 0, Value::Number(0.9)),
            ],
            schema(),
            Strictness::Abort,
        )
        .unwrap();
        assert_eq!(out.dataset.len(), 1);
        let s = &out.dataset.samples()[0];
        assert_eq!(s.signal_values.len(), 2);
        assert_eq!(s.individuals.len(), 1);
        assert_eq!(s.individuals[0].individual_index, 0);
    }

    #[test]
    fn probability_out_of_range_names_sample_and_attribute() {
        let err = ingest_manifest(
            vec![SignalManifestEntry::per_sample("s1", "nsfw", Value::Number(1.3))],
            schema(),
            Strictness::Abort,
        )
        .unwrap_err();
        assert_eq!(err.sample_id.as_deref(), Some("s1"));
        assert_eq!(err.attribute.as_deref(), Some("nsfw"));
        assert!(err.message.contains("1.3"));
    }

    #[test]
    fn vector_shape_error() {
        let err = ingest_manifest(
            vec![SignalManifestEntry::per_sample(
                "s1",
                "porn",
                Value::Vector(vec![0.25; 4]),
            )],
            schema(),
            Strictness::Abort,
        )
        .unwrap_err();
        assert!(err.message.contains("4 entries"), "{}", err.message);
    }

    #[test]
    fn scope_mismatch_and_derived_rejected() {
        let mut e = SignalManifestEntry::per_sample("s", "child", Value::Number(0.5));
        let err = ingest_manifest(vec![e.clone()], schema(), Strictness::Abort).unwrap_err();
        assert!(err.message.contains("scope"));
        e.attribute = "nsfw_class".into();
        e.value = Value::Label("positive".into());
        let err = ingest_manifest(vec![e], schema(), Strictness::Abort).unwrap_err();
        assert!(err.message.contains("derived"));
    }

    #[test]
    fn skip_mode_reports_line_numbers() {
        let text = "{\"sample_id\":\"a\",\"attribute\":\"nsfw\",\"scope\":\"per_sample\",\"value\":0.4}\n\
                    not json\n\
                    {\"sample_id\":\"a\",\"attribute\":\"nope\",\"scope\":\"per_sample\",\"value\":1}\n";
        let mut ing = Ingestor::new(schema(), Strictness::Skip);
        ing.read(text.as_bytes(), "m.jsonl").unwrap();
        let out = ing.finish().unwrap();
        assert_eq!(out.report.lines_read, 3);
        assert_eq!(out.report.entries_accepted, 1);
        let lines: Vec<usize> = out.report.skipped.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![2, 3]);
    }

    #[test]
    fn conflicting_duplicates_rejected_identical_tolerated() {
        let a = SignalManifestEntry::per_sample("a", "nsfw", Value::Number(0.4));
        let b = SignalManifestEntry::per_sample("a", "nsfw", Value::Number(0.6));
        assert!(ingest_manifest(vec![a.clone(), a.clone()], schema(), Strictness::Abort).is_ok());
        assert!(ingest_manifest(vec![a.clone(), b.clone()], schema(), Strictness::Abort).is_err());
        let out = ingest_manifest(vec![a, b], schema(), Strictness::Skip).unwrap();
        assert!(out.dataset.samples().is_empty());
        assert_eq!(out.report.entries_accepted, 0);
    }

    #[test]
    fn boxes_give_areas() {
        let out = ingest_manifest(
            vec![
                SignalManifestEntry::per_sample("a", "width", Value::Number(100.0)),
                SignalManifestEntry::per_sample("a", "height", Value::Number(100.0)),
                SignalManifestEntry::per_individual("a", "face", 0, Value::Number(0.99))
                    .with_box(BoxRect::new(10.0, 10.0, 50.0, 50.0)),
            ],
            schema(),
            Strictness::Abort,
        )
        .unwrap();
        let ind = &out.dataset.samples()[0].individuals[0];
        assert_eq!(ind.absolute_area, Some(2500.0));
        assert_eq!(ind.relative_area, Some(0.25));
        assert_eq!(ind.face_probability, Some(0.99));
    }

    #[test]
    fn box_needs_dims_and_bounds() {
        let face = SignalManifestEntry::per_individual("a", "face", 0, Value::Number(0.9))
            .with_box(BoxRect::new(90.0, 0.0, 20.0, 20.0));
        let err = ingest_manifest(vec![face.clone()], schema(), Strictness::Abort).unwrap_err();
        assert!(err.message.contains("width/height"));
        let err = ingest_manifest(
            vec![
                SignalManifestEntry::per_sample("a", "width", Value::Number(100.0)),
                SignalManifestEntry::per_sample("a", "height", Value::Number(100.0)),
                face,
            ],
            schema(),
            Strictness::Abort,
        )
        .unwrap_err();
        assert!(err.message.contains("outside"));
    }
}
