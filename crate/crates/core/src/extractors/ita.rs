use serde::{Deserialize, Serialize};

use super::color::LabImage;
use super::skin::SkinMask;
use super::ExtractError;

/// Skin-tone summary of one masked region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ItaResult {
    pub mean_ita: f64,
    /// Mean over the pixels within one standard deviation of `mean_ita`.
    pub filtered_mean_ita: f64,
    /// Population standard deviation.
    pub std_ita: f64,
    pub n_pixels: usize,
    /// Masked pixels with b = 0, left out of the distribution.
    pub excluded_achromatic: usize,
}

/// Individual typology angle in degrees, `None` where b = 0.
pub fn pixel_ita(l: f64, b: f64) -> Option<f64> {
    if b == 0.0 {
        None
    } else {
        Some(((l - 50.0) / b).atan().to_degrees())
    }
}

/// Mean, population standard deviation and within-one-sigma mean.
pub fn ita_statistics(values: &[f64]) -> Option<(f64, f64, f64)> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let (sum, count) = values
        .iter()
        .filter(|v| (*v - mean).abs() <= std)
        .fold((0.0, 0usize), |(s, c), v| (s + v, c + 1));
    let filtered = if count > 0 { sum / count as f64 } else { mean };
    Some((mean, std, filtered))
}

pub fn compute_ita(lab: &LabImage, mask: &SkinMask) -> Result<ItaResult, ExtractError> {
    if lab.width != mask.width || lab.height != mask.height {
        return Err(ExtractError::SizeMismatch);
    }
    let mut values = Vec::with_capacity(mask.pixel_count);
    let mut excluded = 0;
    for (p, &m) in lab.pixels.iter().zip(&mask.mask) {
        if !m {
            continue;
        }
        match pixel_ita(p.l, p.b) {
            Some(v) => values.push(v),
            None => excluded += 1,
        }
    }
    let (mean_ita, std_ita, filtered_mean_ita) =
        ita_statistics(&values).ok_or(ExtractError::NoSkin)?;
    Ok(ItaResult {
        mean_ita,
        filtered_mean_ita,
        std_ita,
        n_pixels: values.len(),
        excluded_achromatic: excluded,
    })
}
