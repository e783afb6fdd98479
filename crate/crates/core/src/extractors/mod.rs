//! Deterministic signals computed directly from image files: CIE-Lab
//! luminance, skin segmentation, individual typology angle and file
//! metadata. Everything here is a pure function of its inputs.

mod color;
mod ita;
mod metadata;
mod pipeline;
mod skin;

pub use color::{average_luminance, rgb_to_lab, to_cielab, LabImage, LabPixel};
pub use ita::{compute_ita, ita_statistics, pixel_ita, ItaResult};
pub use metadata::{colormode_name, decode_image, extract_metadata, metadata_of, FileMetadata};
pub use pipeline::{
    crop_window, extract_directory, extract_image, ita_entries, sample_id_for, ExtractOptions,
    ExtractOutput, FaceBoxes,
};
pub use skin::{
    cb_cr, dilate, erode, hsv_rule, hue_saturation, segment_skin, skin_markers, ycbcr_rule,
    SkinMask, SkinSegmentationParams,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ExtractError {
    #[error("{0}")]
    Io(String),
    #[error("undecodable image: {0}")]
    Format(String),
    #[error("mask contains no usable skin pixels")]
    NoSkin,
    #[error("mask and image sizes differ")]
    SizeMismatch,
}
