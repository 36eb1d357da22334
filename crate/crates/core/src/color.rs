//! Raster images and sRGB to CIELAB conversion.
//!
//! Conversion follows IEC 61966-2-1 sRGB companding, the sRGB primaries
//! matrix to CIE XYZ, and CIELAB under the D65 white point (2° observer).
//! The reference white is taken as the XYZ image of sRGB white so that
//! `(255, 255, 255)` lands exactly on `L = 100` and every gray has `a = b = 0`.

use crate::{Error, Result};

/// Linear sRGB to XYZ (D65).
const SRGB_TO_XYZ: [[f64; 3]; 3] = [
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
];

const WHITE: [f64; 3] = [
    SRGB_TO_XYZ[0][0] + SRGB_TO_XYZ[0][1] + SRGB_TO_XYZ[0][2],
    SRGB_TO_XYZ[1][0] + SRGB_TO_XYZ[1][1] + SRGB_TO_XYZ[1][2],
    SRGB_TO_XYZ[2][0] + SRGB_TO_XYZ[2][1] + SRGB_TO_XYZ[2][2],
];

/// 8-bit RGB raster, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    data: Vec<[u8; 3]>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize, data: Vec<[u8; 3]>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "image dimensions must be positive, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "pixel buffer holds {} pixels, expected {}",
                data.len(),
                width * height
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Image of a single colour.
    ///
    /// Panics if either dimension is zero.
    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Self {
        assert!(width > 0 && height > 0, "image dimensions must be positive");
        Self {
            width,
            height,
            data: vec![rgb; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[[u8; 3]] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        self.data[y * self.width + x] = rgb;
    }
}

/// A CIELAB colour. `l` is lightness in `0..=100`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LabColor {
    pub l: f64,
    pub a: f64,
    pub b: f64,
}

impl LabColor {
    pub const fn new(l: f64, a: f64, b: f64) -> Self {
        Self { l, a, b }
    }

    pub fn distance_squared(&self, other: &LabColor) -> f64 {
        let dl = self.l - other.l;
        let da = self.a - other.a;
        let db = self.b - other.b;
        dl * dl + da * da + db * db
    }

    /// Euclidean distance in Lab space.
    pub fn distance(&self, other: &LabColor) -> f64 {
        self.distance_squared(other).sqrt()
    }
}

/// Per-pixel CIELAB raster with the dimensions of its source image.
#[derive(Debug, Clone, PartialEq)]
pub struct LabImage {
    width: usize,
    height: usize,
    data: Vec<LabColor>,
}

impl LabImage {
    pub fn new(width: usize, height: usize, data: Vec<LabColor>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidParameter(format!(
                "Lab buffer of {} pixels does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn pixels(&self) -> &[LabColor] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> LabColor {
        self.data[y * self.width + x]
    }
}

fn srgb_to_linear(c: u8) -> f64 {
    let v = f64::from(c) / 255.0;
    if v <= 0.04045 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// Convert one 8-bit sRGB colour to CIELAB (D65).
pub fn rgb_to_lab(rgb: [u8; 3]) -> LabColor {
    linear_to_lab(rgb.map(srgb_to_linear))
}

fn linear_to_lab(lin: [f64; 3]) -> LabColor {
    let mut f = [0.0; 3];
    for (k, row) in SRGB_TO_XYZ.iter().enumerate() {
        let v = row[0] * lin[0] + row[1] * lin[1] + row[2] * lin[2];
        f[k] = lab_f(v / WHITE[k]);
    }
    LabColor {
        l: 116.0 * f[1] - 16.0,
        a: 500.0 * (f[0] - f[1]),
        b: 200.0 * (f[1] - f[2]),
    }
}

/// Element-wise [`rgb_to_lab`].
pub fn convert_image(img: &RgbImage) -> LabImage {
    let mut gamma = [0.0; 256];
    for (c, g) in gamma.iter_mut().enumerate() {
        *g = srgb_to_linear(c as u8);
    }
    LabImage {
        width: img.width,
        height: img.height,
        data: img
            .data
            .iter()
            .map(|p| linear_to_lab(p.map(|c| gamma[c as usize])))
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Textbook conversion written independently: CIE kappa/epsilon form and
    /// the tabulated D65 reference white.
    fn reference_lab(rgb: [u8; 3]) -> [f64; 3] {
        let inv = |c: u8| {
            let c = c as f64 / 255.0;
            if c > 0.04045 {
                ((c + 0.055) / 1.055).powf(2.4)
            } else {
                c / 12.92
            }
        };
        let (r, g, b) = (inv(rgb[0]), inv(rgb[1]), inv(rgb[2]));
        let x = r * 0.4124564 + g * 0.3575761 + b * 0.1804375;
        let y = r * 0.2126729 + g * 0.7151522 + b * 0.0721750;
        let z = r * 0.0193339 + g * 0.1191920 + b * 0.9503041;
        let eps = 216.0 / 24389.0;
        let kappa = 24389.0 / 27.0;
        let f = |t: f64| {
            if t > eps {
                t.powf(1.0 / 3.0)
            } else {
                (kappa * t + 16.0) / 116.0
            }
        };
        let (fx, fy, fz) = (f(x / 0.95047), f(y / 1.0), f(z / 1.08883));
        [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
    }

    fn close(lab: LabColor, want: [f64; 3], tol: f64) -> bool {
        (lab.l - want[0]).abs() <= tol
            && (lab.a - want[1]).abs() <= tol
            && (lab.b - want[2]).abs() <= tol
    }

    #[test]
    fn white_and_black() {
        let w = rgb_to_lab([255, 255, 255]);
        assert!(close(w, [100.0, 0.0, 0.0], 1e-6), "{w:?}");
        let k = rgb_to_lab([0, 0, 0]);
        assert!(close(k, [0.0, 0.0, 0.0], 1e-12), "{k:?}");
    }

    #[test]
    fn published_spot_values() {
        // Tabulated sRGB primaries in D65 Lab.
        assert!(close(rgb_to_lab([255, 0, 0]), [53.2408, 80.0925, 67.2032], 1e-3));
        assert!(close(rgb_to_lab([0, 255, 0]), [87.7347, -86.1827, 83.1793], 1e-3));
        assert!(close(rgb_to_lab([0, 0, 255]), [32.2970, 79.1875, -107.8602], 1e-3));
        // The oracle must agree with the same table.
        let r = reference_lab([255, 0, 0]);
        assert!((r[0] - 53.2408).abs() < 1e-3 && (r[1] - 80.0925).abs() < 1e-3);
    }

    #[test]
    fn random_colors_match_reference() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(7);
        for _ in 0..1000 {
            let c: [u8; 3] = [rng.gen(), rng.gen(), rng.gen()];
            assert!(close(rgb_to_lab(c), reference_lab(c), 1e-3), "{c:?}");
        }
    }

    #[test]
    fn grays_are_neutral_and_monotone() {
        let mut prev = -1.0;
        for g in 0..=255u8 {
            let lab = rgb_to_lab([g, g, g]);
            assert!(lab.a.abs() < 1e-3 && lab.b.abs() < 1e-3, "{g}: {lab:?}");
            assert!(lab.l >= prev);
            prev = lab.l;
        }
    }

    #[test]
    fn convert_image_is_elementwise() {
        let white = convert_image(&RgbImage::filled(2, 2, [255, 255, 255]));
        assert_eq!((white.width(), white.height()), (2, 2));
        assert!(white.pixels().iter().all(|&p| close(p, [100.0, 0.0, 0.0], 1e-6)));

        let black = convert_image(&RgbImage::filled(1, 1, [0, 0, 0]));
        assert_eq!(black.get(0, 0), LabColor::new(0.0, 0.0, 0.0));

        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let data: Vec<[u8; 3]> = (0..15).map(|_| [rng.gen(), rng.gen(), rng.gen()]).collect();
        let img = RgbImage::new(5, 3, data).unwrap();
        let lab = convert_image(&img);
        for y in 0..3 {
            for x in 0..5 {
                assert_eq!(lab.get(x, y), rgb_to_lab(img.get(x, y)));
            }
        }
    }

    #[test]
    fn rejects_bad_buffers() {
        assert!(RgbImage::new(0, 3, vec![]).is_err());
        assert!(RgbImage::new(2, 2, vec![[0; 3]; 3]).is_err());
    }
}
