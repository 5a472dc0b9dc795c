//! In-memory images: linear RGB and single-channel float planes.
//!
//! Pixel `(x, y)` has its center at continuous coordinate `(x, y)`, matching
//! the convention used by the camera models.

use std::path::Path;

use crate::error::{Error, Result};

pub type Rgb = [f32; 3];

/// Linear RGB image, row-major, nominal range [0, 1].
#[derive(Clone, Debug, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<Rgb>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![[0.0; 3]; width * height],
        }
    }

    pub fn filled(width: usize, height: usize, c: Rgb) -> Self {
        Self {
            width,
            height,
            data: vec![c; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> Rgb) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self { width, height, data }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        self.data[y * self.width + x] = c;
    }

    /// Bilinear sample; `None` unless all four taps are inside the image.
    #[inline]
    pub fn sample_bilinear(&self, u: f64, v: f64) -> Option<Rgb> {
        if !(u >= 0.0 && v >= 0.0) {
            return None;
        }
        let (x0, y0) = (u.floor() as usize, v.floor() as usize);
        let (fx, fy) = ((u - x0 as f64) as f32, (v - y0 as f64) as f32);
        if x0 >= self.width || y0 >= self.height {
            return None;
        }
        // an exact hit on the last row/column needs no neighbour
        let x1 = if fx > 0.0 { x0 + 1 } else { x0 };
        let y1 = if fy > 0.0 { y0 + 1 } else { y0 };
        if x1 >= self.width || y1 >= self.height {
            return None;
        }
        let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
        let mut out = [0.0f32; 3];
        for k in 0..3 {
            let top = a[k] + (b[k] - a[k]) * fx;
            let bottom = c[k] + (d[k] - c[k]) * fx;
            out[k] = top + (bottom - top) * fy;
        }
        Some(out)
    }

    /// Mean intensity over the pixels selected by `mask` (all pixels when
    /// `None`).
    pub fn mean_intensity(&self, mask: Option<&[bool]>) -> f64 {
        let mut sum = 0.0f64;
        let mut n = 0usize;
        for (i, c) in self.data.iter().enumerate() {
            if mask.is_none_or(|m| m[i]) {
                sum += (c[0] as f64 + c[1] as f64 + c[2] as f64) / 3.0;
                n += 1;
            }
        }
        if n == 0 {
            0.0
        } else {
            sum / n as f64
        }
    }

    pub fn scaled(&self, s: f32) -> Self {
        Self {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|c| [c[0] * s, c[1] * s, c[2] * s]).collect(),
        }
    }

    pub fn load_png(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path.as_ref())?.to_rgb8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let data = img
            .pixels()
            .map(|p| [srgb_to_linear(p[0]), srgb_to_linear(p[1]), srgb_to_linear(p[2])])
            .collect();
        Ok(Self { width: w, height: h, data })
    }

    /// Writes an 8-bit sRGB PNG. With a mask the output is RGBA and the mask
    /// goes to the alpha channel.
    pub fn save_png(&self, path: impl AsRef<Path>, mask: Option<&[bool]>) -> Result<()> {
        let (w, h) = (self.width as u32, self.height as u32);
        match mask {
            Some(m) => {
                if m.len() != self.data.len() {
                    return Err(Error::InvalidArgument("mask size does not match image".into()));
                }
                let mut buf = Vec::with_capacity(self.data.len() * 4);
                for (c, &on) in self.data.iter().zip(m) {
                    buf.extend(c.iter().map(|&v| linear_to_srgb(v)));
                    buf.push(if on { 255 } else { 0 });
                }
                image::RgbaImage::from_raw(w, h, buf)
                    .expect("buffer size")
                    .save_with_format(path, image::ImageFormat::Png)?;
            }
            None => {
                let buf: Vec<u8> = self.data.iter().flat_map(|c| c.map(linear_to_srgb)).collect();
                image::RgbImage::from_raw(w, h, buf)
                    .expect("buffer size")
                    .save_with_format(path, image::ImageFormat::Png)?;
            }
        }
        Ok(())
    }

    /// Reads the alpha channel of a PNG as a coverage mask (all true when the
    /// file has no alpha).
    pub fn load_png_mask(path: impl AsRef<Path>) -> Result<Vec<bool>> {
        let img = image::open(path.as_ref())?;
        if img.color().has_alpha() {
            Ok(img.to_rgba8().pixels().map(|p| p[3] >= 128).collect())
        } else {
            Ok(vec![true; img.width() as usize * img.height() as usize])
        }
    }
}

/// Single-channel float image.
#[derive(Clone, Debug, PartialEq)]
pub struct Plane<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Plane<T> {
    pub fn filled(width: usize, height: usize, v: T) -> Self {
        Self {
            width,
            height,
            data: vec![v; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }
}

/// sRGB transfer function, decoding an 8-bit value to linear [0, 1].
pub fn srgb_to_linear(v: u8) -> f32 {
    let c = v as f32 / 255.0;
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

pub fn linear_to_srgb(v: f32) -> u8 {
    let c = v.clamp(0.0, 1.0);
    let s = if c <= 0.003_130_8 {
        12.92 * c
    } else {
        1.055 * c.powf(1.0 / 2.4) - 0.055
    };
    (s * 255.0 + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Peak signal-to-noise ratio in dB for a unit peak, over masked pixels.
pub fn psnr(a: &RgbImage, b: &RgbImage, mask: Option<&[bool]>) -> f64 {
    assert_eq!((a.width, a.height), (b.width, b.height), "psnr needs equal sizes");
    let mut se = 0.0f64;
    let mut n = 0usize;
    for (i, (p, q)) in a.data.iter().zip(&b.data).enumerate() {
        if mask.is_none_or(|m| m[i]) {
            for k in 0..3 {
                let d = p[k] as f64 - q[k] as f64;
                se += d * d;
            }
            n += 3;
        }
    }
    if n == 0 {
        return f64::NAN;
    }
    let mse = se / n as f64;
    if mse == 0.0 {
        f64::INFINITY
    } else {
        -10.0 * mse.log10()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_interpolates_and_rejects_outside() {
        let img = RgbImage::from_fn(3, 2, |x, y| [x as f32, y as f32, 1.0]);
        assert_eq!(img.sample_bilinear(1.5, 0.5), Some([1.5, 0.5, 1.0]));
        assert_eq!(img.sample_bilinear(2.0, 1.0), Some([2.0, 1.0, 1.0]));
        assert!(img.sample_bilinear(2.01, 0.0).is_none());
        assert!(img.sample_bilinear(-0.01, 0.0).is_none());
        assert!(img.sample_bilinear(f64::NAN, 0.0).is_none());
    }

    #[test]
    fn srgb_round_trip_is_exact_on_bytes() {
        for v in 0..=255u8 {
            assert_eq!(linear_to_srgb(srgb_to_linear(v)), v);
        }
    }

    #[test]
    fn png_round_trip_with_mask() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.png");
        let img = RgbImage::from_fn(4, 3, |x, y| [srgb_to_linear((x * 40) as u8), srgb_to_linear((y * 60) as u8), 0.0]);
        let mask: Vec<bool> = (0..12).map(|i| i % 2 == 0).collect();
        img.save_png(&path, Some(&mask)).unwrap();
        let back = RgbImage::load_png(&path).unwrap();
        assert_eq!(back, img);
        assert_eq!(RgbImage::load_png_mask(&path).unwrap(), mask);
    }

    #[test]
    fn psnr_of_identical_images_is_infinite() {
        let a = RgbImage::filled(2, 2, [0.5; 3]);
        assert!(psnr(&a, &a, None).is_infinite());
        let b = RgbImage::filled(2, 2, [0.6; 3]);
        assert!((psnr(&a, &b, None) - 20.0).abs() < 1e-4);
    }
}
