use std::path::Path;

use image::{ColorType, DynamicImage, ImageReader};
use serde::{Deserialize, Serialize};

use super::ExtractError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileMetadata {
    /// Lowercase, without the dot; empty when the file has none.
    pub extension: String,
    pub colormode: String,
    pub aspect_ratio: f64,
    pub resolution: u64,
    pub width: u32,
    pub height: u32,
}

pub fn colormode_name(color: ColorType) -> &'static str {
    match color {
        ColorType::L8 => "grayscale",
        ColorType::La8 => "grayscale_alpha",
        ColorType::Rgb8 => "RGB",
        ColorType::Rgba8 => "RGBA",
        ColorType::L16 => "grayscale16",
        ColorType::La16 => "grayscale_alpha16",
        ColorType::Rgb16 => "RGB16",
        ColorType::Rgba16 => "RGBA16",
        ColorType::Rgb32F => "RGB32F",
        ColorType::Rgba32F => "RGBA32F",
        _ => "other",
    }
}

/// Decodes the whole file so truncated images are reported as format errors.
pub fn decode_image(path: &Path) -> Result<DynamicImage, ExtractError> {
    let reader = ImageReader::open(path)
        .map_err(|e| ExtractError::Io(format!("{}: {e}", path.display())))?
        .with_guessed_format()
        .map_err(|e| ExtractError::Io(format!("{}: {e}", path.display())))?;
    if reader.format().is_none() {
        return Err(ExtractError::Format(format!(
            "{}: unrecognized image format",
            path.display()
        )));
    }
    reader
        .decode()
        .map_err(|e| ExtractError::Format(format!("{}: {e}", path.display())))
}

pub fn metadata_of(path: &Path, image: &DynamicImage) -> FileMetadata {
    let extension = path
        .extension()
        .map(|e| e.to_string_lossy().to_lowercase())
        .unwrap_or_default();
    let (width, height) = (image.width(), image.height());
    FileMetadata {
        extension,
        colormode: colormode_name(image.color()).to_string(),
        aspect_ratio: width as f64 / height as f64,
        resolution: width as u64 * height as u64,
        width,
        height,
    }
}

pub fn extract_metadata(path: &Path) -> Result<FileMetadata, ExtractError> {
    let image = decode_image(path)?;
    Ok(metadata_of(path, &image))
}
