use std::sync::OnceLock;

use image::RgbImage;

/// One pixel in CIE-Lab (D65).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabPixel {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

/// Row-major grid of Lab pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<LabPixel>,
}

impl LabImage {
    pub fn get(&self, x: u32, y: u32) -> LabPixel {
        self.pixels[(y * self.width + x) as usize]
    }
}

// sRGB primaries to XYZ, D65.
const RGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.412_456_4, 0.357_576_1, 0.180_437_5],
    [0.212_672_9, 0.715_152_2, 0.072_175_0],
    [0.019_333_9, 0.119_192_0, 0.950_304_1],
];

// Reference white as the image of RGB (1, 1, 1), so white maps to a = b = 0.
const WHITE: [f64; 3] = [
    RGB_TO_XYZ[0][0] + RGB_TO_XYZ[0][1] + RGB_TO_XYZ[0][2],
    RGB_TO_XYZ[1][0] + RGB_TO_XYZ[1][1] + RGB_TO_XYZ[1][2],
    RGB_TO_XYZ[2][0] + RGB_TO_XYZ[2][1] + RGB_TO_XYZ[2][2],
];

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.040_45 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn linear_lut() -> &'static [f64; 256] {
    static LUT: OnceLock<[f64; 256]> = OnceLock::new();
    LUT.get_or_init(|| {
        let mut t = [0.0; 256];
        for (i, v) in t.iter_mut().enumerate() {
            *v = srgb_to_linear(i as f64 / 255.0);
        }
        t
    })
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Converts one 8-bit sRGB triple to CIE-Lab.
pub fn rgb_to_lab(rgb: [u8; 3]) -> LabPixel {
    let lut = linear_lut();
    let lin = [lut[rgb[0] as usize], lut[rgb[1] as usize], lut[rgb[2] as usize]];
    let xyz: [f64; 3] = std::array::from_fn(|r| {
        RGB_TO_XYZ[r][0] * lin[0] + RGB_TO_XYZ[r][1] * lin[1] + RGB_TO_XYZ[r][2] * lin[2]
    });
    let fx = lab_f(xyz[0] / WHITE[0]);
    let fy = lab_f(xyz[1] / WHITE[1]);
    let fz = lab_f(xyz[2] / WHITE[2]);
    LabPixel {
        l: (116.0 * fy - 16.0).clamp(0.0, 100.0),
        a: 500.0 * (fx - fy),
        b: 200.0 * (fy - fz),
    }
}

pub fn to_cielab(image: &RgbImage) -> LabImage {
    LabImage {
        width: image.width(),
        height: image.height(),
        pixels: image.pixels().map(|p| rgb_to_lab(p.0)).collect(),
    }
}

/// Mean CIE-Lab lightness over all pixels; `None` for an empty image.
pub fn average_luminance(image: &RgbImage) -> Option<f64> {
    let n = image.width() as u64 * image.height() as u64;
    if n == 0 {
        return None;
    }
    let sum: f64 = image.pixels().map(|p| rgb_to_lab(p.0).l).sum();
    Some(sum / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    #[test]
    fn white_black_gray() {
        let w = rgb_to_lab([255, 255, 255]);
        assert!((w.l - 100.0).abs() < 1e-3);
        assert!(w.a.abs() < 1e-9 && w.b.abs() < 1e-9);
        assert!(rgb_to_lab([0, 0, 0]).l.abs() < 1e-3);
        // Reference value from an independent Lab implementation.
        assert!((rgb_to_lab([119, 119, 119]).l - 50.034_438_792_538).abs() < 1e-3);
    }

    #[test]
    fn chromatic_reference_values() {
        // (204, 112, 82) -> (57.1127, 33.4942, 32.5809) from the same reference.
        let p = rgb_to_lab([204, 112, 82]);
        assert!((p.l - 57.112_703).abs() < 1e-3);
        assert!((p.a - 33.494_230).abs() < 1e-2);
        assert!((p.b - 32.580_915).abs() < 1e-2);
    }

    #[test]
    fn luminance_examples() {
        let white = RgbImage::from_pixel(8, 8, Rgb([255, 255, 255]));
        assert!((average_luminance(&white).unwrap() - 100.0).abs() < 1e-3);
        let half = RgbImage::from_fn(8, 8, |x, _| if x < 4 { Rgb([0, 0, 0]) } else { Rgb([255, 255, 255]) });
        assert!((average_luminance(&half).unwrap() - 50.0).abs() < 1e-3);
    }

    #[test]
    fn luminance_matches_pixel_loop() {
        let img = RgbImage::from_fn(37, 23, |x, y| Rgb([(x * 7) as u8, (y * 11) as u8, ((x + y) * 3) as u8]));
        let mut sum = 0.0;
        for y in 0..img.height() {
            for x in 0..img.width() {
                sum += rgb_to_lab(img.get_pixel(x, y).0).l;
            }
        }
        let oracle = sum / (37.0 * 23.0);
        assert!((average_luminance(&img).unwrap() - oracle).abs() < 1e-12);
    }
}
