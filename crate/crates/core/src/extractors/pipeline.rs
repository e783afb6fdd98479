use std::collections::BTreeMap;
use std::path::Path;

use image::{imageops, RgbImage};
use rayon::prelude::*;
use walkdir::WalkDir;

use super::color::{average_luminance, to_cielab};
use super::ita::compute_ita;
use super::metadata::{decode_image, metadata_of};
use super::skin::{segment_skin, SkinSegmentationParams};
use super::ExtractError;
use crate::signal_model::{BoxRect, SignalManifestEntry, Value};

const IMAGE_EXTENSIONS: [&str; 9] = ["jpg", "jpeg", "png", "gif", "bmp", "webp", "tif", "tiff", "jfif"];

/// Face boxes per sample, as produced by an external face detector.
#[derive(Debug, Clone, Default)]
pub struct FaceBoxes(BTreeMap<String, Vec<(u32, BoxRect)>>);

impl FaceBoxes {
    pub fn from_entries<'a>(entries: impl IntoIterator<Item = &'a SignalManifestEntry>, face_attribute: &str) -> Self {
        let mut map: BTreeMap<String, Vec<(u32, BoxRect)>> = BTreeMap::new();
        for e in entries {
            if e.attribute != face_attribute {
                continue;
            }
            if let (Some(i), Some(b)) = (e.individual_index, e.bbox) {
                map.entry(e.sample_id.clone()).or_default().push((i, b));
            }
        }
        for v in map.values_mut() {
            v.sort_by_key(|(i, _)| *i);
            v.dedup_by_key(|(i, _)| *i);
        }
        Self(map)
    }

    pub fn get(&self, sample_id: &str) -> &[(u32, BoxRect)] {
        self.0.get(sample_id).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn len(&self) -> usize {
        self.0.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

#[derive(Debug, Clone)]
pub struct ExtractOptions {
    pub skin: SkinSegmentationParams,
    pub ita_attribute: String,
}

impl Default for ExtractOptions {
    fn default() -> Self {
        Self {
            skin: SkinSegmentationParams::default(),
            ita_attribute: "ita".into(),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct ExtractOutput {
    pub entries: Vec<SignalManifestEntry>,
    /// Files that could not be decoded, with the reason.
    pub failures: Vec<(String, String)>,
    pub images: usize,
    /// Face boxes whose region held no skin pixels; no ITA is emitted.
    pub faces_without_skin: usize,
}

/// Integer pixel window covering `b`, clipped to the image.
pub fn crop_window(b: &BoxRect, width: u32, height: u32) -> Option<(u32, u32, u32, u32)> {
    let x0 = b.x.floor().max(0.0) as u32;
    let y0 = b.y.floor().max(0.0) as u32;
    let x1 = ((b.x + b.width).ceil() as u32).min(width);
    let y1 = ((b.y + b.height).ceil() as u32).min(height);
    (x1 > x0 && y1 > y0).then(|| (x0, y0, x1 - x0, y1 - y0))
}

/// ITA entries for each face box with skin; returns the count of boxes without.
pub fn ita_entries(
    rgb: &RgbImage,
    sample_id: &str,
    faces: &[(u32, BoxRect)],
    opts: &ExtractOptions,
) -> (Vec<SignalManifestEntry>, usize) {
    let mut out = Vec::new();
    let mut no_skin = 0;
    for (idx, b) in faces {
        let Some((x, y, w, h)) = crop_window(b, rgb.width(), rgb.height()) else {
            no_skin += 1;
            continue;
        };
        let crop = imageops::crop_imm(rgb, x, y, w, h).to_image();
        let mask = segment_skin(&crop, opts.skin);
        match compute_ita(&to_cielab(&crop), &mask) {
            Ok(r) => out.push(SignalManifestEntry::per_individual(
                sample_id,
                opts.ita_attribute.clone(),
                *idx,
                Value::Number(r.filtered_mean_ita),
            )),
            Err(_) => no_skin += 1,
        }
    }
    (out, no_skin)
}

/// All native signals of one image file.
pub fn extract_image(
    path: &Path,
    sample_id: &str,
    faces: &[(u32, BoxRect)],
    opts: &ExtractOptions,
) -> Result<(Vec<SignalManifestEntry>, usize), ExtractError> {
    let image = decode_image(path)?;
    let meta = metadata_of(path, &image);
    let rgb = image.to_rgb8();
    let mut entries = Vec::new();
    let mut push = |attr: &str, v: Value| entries.push(SignalManifestEntry::per_sample(sample_id, attr, v));
    if let Some(l) = average_luminance(&rgb) {
        push("luminance", Value::Number(l));
    }
    push("extension", Value::Label(meta.extension.clone()));
    push("colormode", Value::Label(meta.colormode.clone()));
    push("aspect_ratio", Value::Number(meta.aspect_ratio));
    push("resolution", Value::Number(meta.resolution as f64));
    push("width", Value::Number(meta.width as f64));
    push("height", Value::Number(meta.height as f64));
    let (ita, no_skin) = ita_entries(&rgb, sample_id, faces, opts);
    entries.extend(ita);
    Ok((entries, no_skin))
}

/// Sample id of a file: its path relative to the root, `/`-separated.
pub fn sample_id_for(root: &Path, path: &Path) -> String {
    let rel = path.strip_prefix(root).unwrap_or(path);
    rel.components()
        .map(|c| c.as_os_str().to_string_lossy())
        .collect::<Vec<_>>()
        .join("/")
}

/// Walks `root` and extracts every image file in parallel. Output entries are
/// ordered by sample id.
pub fn extract_directory(root: &Path, faces: &FaceBoxes, opts: &ExtractOptions) -> Result<ExtractOutput, ExtractError> {
    if !root.is_dir() {
        return Err(ExtractError::Io(format!("{} is not a directory", root.display())));
    }
    let mut files: Vec<_> = WalkDir::new(root)
        .follow_links(false)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| {
            p.extension()
                .map(|e| IMAGE_EXTENSIONS.contains(&e.to_string_lossy().to_lowercase().as_str()))
                .unwrap_or(false)
        })
        .collect();
    files.sort();
    let results: Vec<_> = files
        .par_iter()
        .map(|path| {
            let id = sample_id_for(root, path);
            let r = extract_image(path, &id, faces.get(&id), opts);
            (id, r)
        })
        .collect();
    let mut out = ExtractOutput {
        images: files.len(),
        ..Default::default()
    };
    for (id, r) in results {
        match r {
            Ok((entries, no_skin)) => {
                out.entries.extend(entries);
                out.faces_without_skin += no_skin;
            }
            Err(e) => out.failures.push((id, e.to_string())),
        }
    }
    Ok(out)
}
