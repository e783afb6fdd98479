use std::collections::BTreeMap;
use std::io::{self, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::descriptor::Scope;
use super::manifest::SignalManifestEntry;
use super::schema::Schema;
use super::value::{BoxRect, ImageDims, Value};

/// One detected individual (face or object instance) inside a sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndividualRecord {
    pub individual_index: u32,
    pub bbox: Option<BoxRect>,
    pub face_probability: Option<f64>,
    pub absolute_area: Option<f64>,
    pub relative_area: Option<f64>,
    pub signal_values: BTreeMap<String, Value>,
}

impl IndividualRecord {
    pub fn new(individual_index: u32) -> Self {
        Self {
            individual_index,
            bbox: None,
            face_probability: None,
            absolute_area: None,
            relative_area: None,
            signal_values: BTreeMap::new(),
        }
    }

    pub fn get(&self, attribute: &str) -> Option<&Value> {
        self.signal_values.get(attribute)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: String,
    pub image_dims: Option<ImageDims>,
    pub signal_values: BTreeMap<String, Value>,
    /// Sorted by `individual_index`.
    pub individuals: Vec<IndividualRecord>,
}

impl SampleRecord {
    pub fn new(sample_id: impl Into<String>) -> Self {
        Self {
            sample_id: sample_id.into(),
            image_dims: None,
            signal_values: BTreeMap::new(),
            individuals: Vec::new(),
        }
    }

    pub fn get(&self, attribute: &str) -> Option<&Value> {
        self.signal_values.get(attribute)
    }
}

/// An ingested, immutable dataset. Samples are sorted by id.
#[derive(Debug, Clone)]
pub struct Dataset {
    schema: Arc<Schema>,
    samples: Vec<SampleRecord>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.schema.digest() == other.schema.digest() && self.samples == other.samples
    }
}

impl Dataset {
    /// Wraps already-validated records. Records are sorted by id; callers
    /// outside ingestion are expected to uphold the schema's invariants.
    pub(crate) fn from_records(schema: Arc<Schema>, mut samples: Vec<SampleRecord>) -> Self {
        samples.sort_by(|a, b| a.sample_id.cmp(&b.sample_id));
        for s in &mut samples {
            s.individuals.sort_by_key(|i| i.individual_index);
        }
        Self { schema, samples }
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn schema_arc(&self) -> Arc<Schema> {
        Arc::clone(&self.schema)
    }

    pub fn samples(&self) -> &[SampleRecord] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn individual_count(&self) -> usize {
        self.samples.iter().map(|s| s.individuals.len()).sum()
    }

    pub fn sample(&self, sample_id: &str) -> Option<&SampleRecord> {
        self.samples
            .binary_search_by(|s| s.sample_id.as_str().cmp(sample_id))
            .ok()
            .map(|i| &self.samples[i])
    }

    /// Canonical manifest entries describing this dataset. Boxes ride on the
    /// face attribute entry when present, otherwise on the individual's first
    /// entry.
    pub fn to_manifest_entries(&self) -> Vec<SignalManifestEntry> {
        let face = self.schema.face_attribute();
        let mut out = Vec::new();
        for s in &self.samples {
            for (attr, v) in &s.signal_values {
                out.push(SignalManifestEntry {
                    sample_id: s.sample_id.clone(),
                    attribute: attr.clone(),
                    scope: Scope::PerSample,
                    individual_index: None,
                    value: v.clone(),
                    bbox: None,
                });
            }
            for ind in &s.individuals {
                let box_attr = if ind.signal_values.contains_key(face) {
                    Some(face.to_string())
                } else {
                    ind.signal_values.keys().next().cloned()
                };
                for (attr, v) in &ind.signal_values {
                    out.push(SignalManifestEntry {
                        sample_id: s.sample_id.clone(),
                        attribute: attr.clone(),
                        scope: Scope::PerIndividual,
                        individual_index: Some(ind.individual_index),
                        value: v.clone(),
                        bbox: if box_attr.as_deref() == Some(attr.as_str()) {
                            ind.bbox
                        } else {
                            None
                        },
                    });
                }
            }
        }
        out
    }

    pub fn write_manifest<W: Write>(&self, mut w: W) -> io::Result<()> {
        for e in self.to_manifest_entries() {
            serde_json::to_writer(&mut w, &e)?;
            w.write_all(b"\n")?;
        }
        w.flush()
    }

    /// Hex SHA-256 over the schema digest and the canonical manifest.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.schema.digest().as_bytes());
        let mut buf = Vec::new();
        self.write_manifest(&mut buf).expect("in-memory write");
        h.update(&buf);
        hex::encode(h.finalize())
    }
}
