use std::cmp::Reverse;
use std::collections::BinaryHeap;

use image::RgbImage;

/// Binary skin mask, row-major, same size as the segmented region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SkinMask {
    pub width: u32,
    pub height: u32,
    pub mask: Vec<bool>,
    pub pixel_count: usize,
}

impl SkinMask {
    pub fn from_bits(width: u32, height: u32, mask: Vec<bool>) -> Self {
        assert_eq!(mask.len(), (width * height) as usize);
        let pixel_count = mask.iter().filter(|&&m| m).count();
        Self {
            width,
            height,
            mask,
            pixel_count,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.pixel_count == 0
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        self.mask[(y * self.width + x) as usize]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SkinSegmentationParams {
    /// Side of the square kernel used for the erosion/dilation cleanup.
    pub noise_kernel: usize,
    /// Side of the square dilation whose complement seeds the background.
    pub background_kernel: usize,
}

impl Default for SkinSegmentationParams {
    fn default() -> Self {
        Self {
            noise_kernel: 3,
            background_kernel: 7,
        }
    }
}

/// Hue in degrees [0, 360) and saturation in percent.
pub fn hue_saturation(rgb: [u8; 3]) -> (f64, f64) {
    let [r, g, b] = rgb.map(|c| c as f64);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max > 0.0 { delta / max * 100.0 } else { 0.0 };
    let h = if delta == 0.0 {
        0.0
    } else if max == r {
        60.0 * ((g - b) / delta).rem_euclid(6.0)
    } else if max == g {
        60.0 * ((b - r) / delta + 2.0)
    } else {
        60.0 * ((r - g) / delta + 4.0)
    };
    (h, s)
}

/// Full-range (JPEG) chroma components.
pub fn cb_cr(rgb: [u8; 3]) -> (f64, f64) {
    let [r, g, b] = rgb.map(|c| c as f64);
    let cb = 128.0 - 0.168_736 * r - 0.331_264 * g + 0.5 * b;
    let cr = 128.0 + 0.5 * r - 0.418_688 * g - 0.081_312 * b;
    (cb, cr)
}

pub fn hsv_rule(rgb: [u8; 3]) -> bool {
    let (h, s) = hue_saturation(rgb);
    h < 25.0 && s > 40.0
}

pub fn ycbcr_rule(rgb: [u8; 3]) -> bool {
    let (cb, cr) = cb_cr(rgb);
    77.0 < cb && cb < 127.0 && 133.0 < cr && cr < 173.0
}

/// Union of the two explicit skin-color rules.
pub fn skin_markers(image: &RgbImage) -> Vec<bool> {
    image
        .pixels()
        .map(|p| hsv_rule(p.0) || ycbcr_rule(p.0))
        .collect()
}

/// Square-kernel binary morphology; out-of-image neighbors are ignored.
/// `erode` selects min, otherwise max.
fn morph(mask: &[bool], w: usize, h: usize, kernel: usize, erode: bool) -> Vec<bool> {
    let r = kernel / 2;
    let pass = |src: &[bool], horizontal: bool| -> Vec<bool> {
        let mut out = vec![false; src.len()];
        for y in 0..h {
            for x in 0..w {
                let (pos, len) = if horizontal { (x, w) } else { (y, h) };
                let lo = pos.saturating_sub(r);
                let hi = (pos + r).min(len - 1);
                let mut acc = erode;
                for k in lo..=hi {
                    let v = if horizontal { src[y * w + k] } else { src[k * w + x] };
                    if erode {
                        acc &= v;
                    } else {
                        acc |= v;
                    }
                }
                out[y * w + x] = acc;
            }
        }
        out
    };
    let tmp = pass(mask, true);
    pass(&tmp, false)
}

pub fn erode(mask: &[bool], w: usize, h: usize, kernel: usize) -> Vec<bool> {
    morph(mask, w, h, kernel, true)
}

pub fn dilate(mask: &[bool], w: usize, h: usize, kernel: usize) -> Vec<bool> {
    morph(mask, w, h, kernel, false)
}

const UNKNOWN: u8 = 0;
const SKIN: u8 = 1;
const BACKGROUND: u8 = 2;

fn color_distance(a: [u8; 3], b: [u8; 3]) -> u8 {
    (0..3).map(|i| a[i].abs_diff(b[i])).max().unwrap_or(0)
}

/// Seeded region growing: unknown pixels are flooded from the seeds in order
/// of increasing color difference to the already-labelled neighbor that
/// reached them, FIFO among equal differences.
fn grow_regions(image: &RgbImage, labels: &mut [u8]) {
    let w = image.width() as usize;
    let h = image.height() as usize;
    let px = |i: usize| image.get_pixel((i % w) as u32, (i / w) as u32).0;
    let mut heap: BinaryHeap<Reverse<(u8, u64, usize, u8)>> = BinaryHeap::new();
    let mut seq = 0u64;
    let neighbors = |i: usize| {
        let (x, y) = (i % w, i / w);
        let mut out = [usize::MAX; 4];
        if x > 0 {
            out[0] = i - 1;
        }
        if x + 1 < w {
            out[1] = i + 1;
        }
        if y > 0 {
            out[2] = i - w;
        }
        if y + 1 < h {
            out[3] = i + w;
        }
        out
    };
    for i in 0..labels.len() {
        if labels[i] == UNKNOWN {
            continue;
        }
        for n in neighbors(i) {
            if n != usize::MAX && labels[n] == UNKNOWN {
                heap.push(Reverse((color_distance(px(i), px(n)), seq, n, labels[i])));
                seq += 1;
            }
        }
    }
    while let Some(Reverse((_, _, i, label))) = heap.pop() {
        if labels[i] != UNKNOWN {
            continue;
        }
        labels[i] = label;
        for n in neighbors(i) {
            if n != usize::MAX && labels[n] == UNKNOWN {
                heap.push(Reverse((color_distance(px(i), px(n)), seq, n, label)));
                seq += 1;
            }
        }
    }
}

/// Segments skin inside a (face) region.
///
/// Markers from the HSV and YCbCr rules are cleaned by one erosion and one
/// dilation, then grown against a background seeded outside a wider dilation
/// of the cleaned markers.
pub fn segment_skin(image: &RgbImage, params: SkinSegmentationParams) -> SkinMask {
    let (w, h) = (image.width() as usize, image.height() as usize);
    if w == 0 || h == 0 {
        return SkinMask::from_bits(image.width(), image.height(), Vec::new());
    }
    let markers = skin_markers(image);
    let cleaned = dilate(&erode(&markers, w, h, params.noise_kernel), w, h, params.noise_kernel);
    if !cleaned.iter().any(|&m| m) {
        return SkinMask::from_bits(image.width(), image.height(), vec![false; w * h]);
    }
    let reach = dilate(&cleaned, w, h, params.background_kernel);
    let mut labels: Vec<u8> = cleaned
        .iter()
        .zip(&reach)
        .map(|(&fg, &near)| {
            if fg {
                SKIN
            } else if !near {
                BACKGROUND
            } else {
                UNKNOWN
            }
        })
        .collect();
    grow_regions(image, &mut labels);
    SkinMask::from_bits(
        image.width(),
        image.height(),
        labels.into_iter().map(|l| l == SKIN).collect(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn hsv(h: f64, s: f64, v: f64) -> Rgb<u8> {
        let c = v * s;
        let x = c * (1.0 - ((h / 60.0) % 2.0 - 1.0).abs());
        let m = v - c;
        let (r, g, b) = match (h / 60.0) as u32 {
            0 => (c, x, 0.0),
            1 => (x, c, 0.0),
            2 => (0.0, c, x),
            3 => (0.0, x, c),
            4 => (x, 0.0, c),
            _ => (c, 0.0, x),
        };
        Rgb([r, g, b].map(|u| ((u + m) * 255.0).round() as u8))
    }

    fn iou(a: &[bool], b: &[bool]) -> f64 {
        let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
        let union = a.iter().zip(b).filter(|(x, y)| **x || **y).count();
        inter as f64 / union as f64
    }

    #[test]
    fn planted_patch_recovered() {
        let skin = hsv(15.0, 0.6, 0.8);
        let bg = hsv(120.0, 0.8, 0.8);
        let img = RgbImage::from_fn(100, 100, |x, y| {
            if (30..70).contains(&x) && (30..70).contains(&y) {
                skin
            } else {
                bg
            }
        });
        let truth: Vec<bool> = (0..100 * 100)
            .map(|i| {
                let (x, y) = (i % 100, i / 100);
                (30..70).contains(&x) && (30..70).contains(&y)
            })
            .collect();
        let mask = segment_skin(&img, SkinSegmentationParams::default());
        assert!(iou(&mask.mask, &truth) >= 0.9);
    }

    #[test]
    fn blue_is_never_skin() {
        let img = RgbImage::from_pixel(32, 32, Rgb([0, 0, 255]));
        assert!(segment_skin(&img, SkinSegmentationParams::default()).is_empty());
    }

    #[test]
    fn uniform_skin_color_fills_mask() {
        // (204, 112, 82): H = 15, S = 60 and Cb = 97.5; inside the HSV rule.
        let c = [204, 112, 82];
        assert!(hsv_rule(c));
        let img = RgbImage::from_pixel(50, 40, Rgb(c));
        let mask = segment_skin(&img, SkinSegmentationParams::default());
        assert!(mask.pixel_count as f64 >= 0.95 * 2000.0);
    }

    #[test]
    fn opening_removes_isolated_pixels() {
        let mut img = RgbImage::from_pixel(20, 20, Rgb([0, 0, 255]));
        img.put_pixel(10, 10, Rgb([204, 112, 82]));
        assert!(segment_skin(&img, SkinSegmentationParams::default()).is_empty());
    }

    #[test]
    fn segmentation_is_deterministic() {
        let img = RgbImage::from_fn(40, 40, |x, y| Rgb([(x * 6) as u8, (y * 5) as u8, 90]));
        let a = segment_skin(&img, SkinSegmentationParams::default());
        let b = segment_skin(&img, SkinSegmentationParams::default());
        assert_eq!(a, b);
        assert_eq!(a.pixel_count, a.mask.iter().filter(|&&m| m).count());
    }
}
