//! Face crops behind one histogram bin of a per-individual numeric attribute,
//! for visual inspection of skin tone bins. Exposes pixels and sample ids, so
//! only trusted deployments serve it.

use std::collections::BTreeMap;
use std::io::Cursor;
use std::path::{Component, Path};

use base64::Engine as _;
use image::imageops::FilterType;
use image::ImageFormat;
use serde::{Deserialize, Serialize};

use crate::aggregation::{AggregateError, Axis, Filter, Rows, Unit};
use crate::extractors::{crop_window, decode_image};
use crate::signal_model::Dataset;

/// Patches per page; a 6 x 6 grid.
pub const DEFAULT_PAGE_SIZE: usize = 36;
/// Side of the square thumbnail each crop is resized to.
pub const PATCH_SIDE: u32 = 64;

fn ita() -> String {
    "ita".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchQuery {
    #[serde(default = "ita")]
    pub attribute: String,
    pub bin: usize,
    #[serde(default)]
    pub page: usize,
    #[serde(default)]
    pub filters: Vec<Filter>,
    #[serde(default)]
    pub thresholds: BTreeMap<String, f64>,
}

impl PatchQuery {
    pub fn new(bin: usize) -> Self {
        Self {
            attribute: ita(),
            bin,
            page: 0,
            filters: Vec::new(),
            thresholds: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Patch {
    pub sample_id: String,
    pub individual_index: u32,
    pub value: f64,
    /// PNG, base64 encoded.
    pub png: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchPage {
    pub query: PatchQuery,
    pub axis: Axis,
    pub bin_label: String,
    /// Individuals in the bin with a usable box.
    pub total: usize,
    pub page_size: usize,
    pub patches: Vec<Patch>,
    /// Crops that could not be produced, as `sample_id: reason`.
    pub failures: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PatchError {
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
    #[error("{0:?} is not a per-individual numeric attribute")]
    NotPerIndividual(String),
    #[error("bin {bin} out of range; the axis has {bins} bins")]
    BinOutOfRange { bin: usize, bins: usize },
    #[error("page size must be positive")]
    PageSize,
}

/// Crops the boxes of the individuals whose `query.attribute` falls in
/// `query.bin`, in dataset order, and returns page `query.page`. Sample ids
/// are resolved against `image_root`; ids escaping the root are refused.
pub fn skin_patches(
    dataset: &Dataset,
    image_root: &Path,
    query: &PatchQuery,
    page_size: usize,
) -> Result<PatchPage, PatchError> {
    if page_size == 0 {
        return Err(PatchError::PageSize);
    }
    let rows = Rows::build(dataset, &query.thresholds, &[&query.attribute], &query.filters)?;
    if rows.unit != Unit::Individual || !rows.kind(&query.attribute).is_numeric() {
        return Err(PatchError::NotPerIndividual(query.attribute.clone()));
    }
    let (axis, codes) = rows.encode(&query.attribute, &rows.selected)?;
    if query.bin >= axis.len() {
        return Err(PatchError::BinOutOfRange {
            bin: query.bin,
            bins: axis.len(),
        });
    }
    let frame = rows.frame();
    let mut hits = Vec::new();
    for (&r, code) in rows.selected.iter().zip(&codes) {
        if *code != Some(query.bin) {
            continue;
        }
        let s = frame.owner(r);
        let sample = &dataset.samples()[s];
        let ind = &sample.individuals[r - frame.individual_rows(s).start];
        if let (Some(b), Some(v)) = (ind.bbox, rows.value(&query.attribute, r).and_then(|v| v.as_number())) {
            hits.push((sample.sample_id.as_str(), ind.individual_index, b, v));
        }
    }
    let total = hits.len();
    let mut patches = Vec::new();
    let mut failures = Vec::new();
    for (id, index, b, value) in hits.into_iter().skip(query.page * page_size).take(page_size) {
        match crop(image_root, id, &b) {
            Ok(png) => patches.push(Patch {
                sample_id: id.to_string(),
                individual_index: index,
                value,
                png,
            }),
            Err(e) => failures.push(format!("{id}: {e}")),
        }
    }
    Ok(PatchPage {
        query: query.clone(),
        bin_label: axis.labels[query.bin].clone(),
        axis,
        total,
        page_size,
        patches,
        failures,
    })
}

fn crop(root: &Path, sample_id: &str, b: &crate::signal_model::BoxRect) -> Result<String, String> {
    let rel = Path::new(sample_id);
    if !rel.components().all(|c| matches!(c, Component::Normal(_))) {
        return Err("sample id is not a relative path".into());
    }
    let img = decode_image(&root.join(rel)).map_err(|e| e.to_string())?;
    let (x, y, w, h) = crop_window(b, img.width(), img.height()).ok_or("box outside the image")?;
    let thumb = img
        .crop_imm(x, y, w, h)
        .resize_exact(PATCH_SIDE, PATCH_SIDE, FilterType::Triangle)
        .to_rgb8();
    let mut buf = Cursor::new(Vec::new());
    thumb.write_to(&mut buf, ImageFormat::Png).map_err(|e| e.to_string())?;
    Ok(base64::engine::general_purpose::STANDARD.encode(buf.into_inner()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal_model::{ingest_manifest, BoxRect, Schema, SignalManifestEntry, Strictness, Value};
    use image::{Rgb, RgbImage};
    use std::sync::Arc;

    fn fixture(dir: &Path) -> Dataset {
        let mut entries = Vec::new();
        for (i, ita) in [-40.0, 10.0, 55.0, 60.0].iter().enumerate() {
            let id = format!("img{i}.png");
            let mut img = RgbImage::from_pixel(40, 40, Rgb([0, 0, 255]));
            for x in 10..30 {
                for y in 10..30 {
                    img.put_pixel(x, y, Rgb([200, 150, 120]));
                }
            }
            img.save(dir.join(&id)).unwrap();
            entries.push(SignalManifestEntry::per_sample(&id, "width", Value::Number(40.0)));
            entries.push(SignalManifestEntry::per_sample(&id, "height", Value::Number(40.0)));
            entries.push(
                SignalManifestEntry::per_individual(&id, "face", 0, Value::Number(0.9))
                    .with_box(BoxRect::new(10.0, 10.0, 20.0, 20.0)),
            );
            entries.push(SignalManifestEntry::per_individual(&id, "ita", 0, Value::Number(*ita)));
        }
        ingest_manifest(entries, Arc::new(Schema::builtin()), Strictness::Abort)
            .unwrap()
            .dataset
    }

    #[test]
    fn crops_one_bin() {
        let dir = tempfile::tempdir().unwrap();
        let ds = fixture(dir.path());
        let top = skin_patches(&ds, dir.path(), &PatchQuery::new(9), 36).unwrap();
        assert_eq!(top.total, 2);
        assert_eq!(top.patches.len(), 2);
        assert!(top.failures.is_empty());
        let png = base64::engine::general_purpose::STANDARD.decode(&top.patches[0].png).unwrap();
        let img = image::load_from_memory(&png).unwrap().to_rgb8();
        assert_eq!(img.dimensions(), (PATCH_SIDE, PATCH_SIDE));
        assert_eq!(*img.get_pixel(32, 32), Rgb([200, 150, 120]));

        let paged = skin_patches(&ds, dir.path(), &PatchQuery { page: 1, ..PatchQuery::new(9) }, 1).unwrap();
        assert_eq!(paged.patches.len(), 1);
        assert_eq!(paged.patches[0].sample_id, top.patches[1].sample_id);
    }

    #[test]
    fn rejects() {
        let dir = tempfile::tempdir().unwrap();
        let ds = fixture(dir.path());
        assert!(matches!(
            skin_patches(&ds, dir.path(), &PatchQuery::new(10), 36),
            Err(PatchError::BinOutOfRange { .. })
        ));
        let q = PatchQuery {
            attribute: "luminance".into(),
            ..PatchQuery::new(0)
        };
        assert!(skin_patches(&ds, dir.path(), &q, 36).is_err());
        assert_eq!(skin_patches(&ds, dir.path(), &PatchQuery::new(0), 0), Err(PatchError::PageSize));
    }
}
