pub mod augment;
pub mod corrupt;
pub mod io;
pub mod manifest;
pub mod synthgen;

pub use manifest::{build_manifest, DatasetManifest, PairRef, AUG_ANGLES};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// 8-bit RGB image, row-major interleaved.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, pixels: Vec<u8>) -> Result<Image> {
        if width == 0 || height == 0 {
            return Err(Error::Dim(format!("image extents must be >= 1, got {width}x{height}")));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::Dim(format!(
                "pixel buffer of {} bytes does not match {width}x{height} RGB",
                pixels.len()
            )));
        }
        Ok(Image { width, height, pixels })
    }

    pub fn filled(width: usize, height: usize, rgb: [u8; 3]) -> Image {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&rgb);
        }
        Image { width, height, pixels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.pixels[i..i + 3].copy_from_slice(&rgb);
    }

    /// Planar [3,H,W] float tensor scaled to [0,1].
    pub fn to_tensor(&self) -> Tensor<f32> {
        let (w, h) = (self.width, self.height);
        let mut data = vec![0.0f32; 3 * w * h];
        for y in 0..h {
            for x in 0..w {
                let px = self.get(x, y);
                for c in 0..3 {
                    data[c * h * w + y * w + x] = f32::from(px[c]) / 255.0;
                }
            }
        }
        Tensor::new(vec![3, h, w], data).expect("image extents are valid")
    }

    /// Inverse of [`Image::to_tensor`]: scales by 255, rounds to nearest,
    /// clamps to [0,255].
    pub fn from_tensor(t: &Tensor<f32>) -> Result<Image> {
        let shape = t.shape();
        let [c, h, w] = shape else {
            return Err(Error::Dim(format!("expected [3,H,W] tensor, got {shape:?}")));
        };
        if *c != 3 {
            return Err(Error::Dim(format!("expected 3 channels, got {c}")));
        }
        let (h, w) = (*h, *w);
        let mut pixels = vec![0u8; w * h * 3];
        let data = t.data();
        for y in 0..h {
            for x in 0..w {
                for ch in 0..3 {
                    let v = (data[ch * h * w + y * w + x] * 255.0).round().clamp(0.0, 255.0);
                    pixels[(y * w + x) * 3 + ch] = v as u8;
                }
            }
        }
        Image::new(w, h, pixels)
    }
}

/// One training/eval unit: a corrupted view and its clean counterpart,
/// with provenance. `angle` is the augmentation rotation in degrees.
#[derive(Debug, Clone)]
pub struct ImagePair {
    pub corrupted: Image,
    pub clean: Image,
    pub base_id: String,
    pub angle: u16,
}

impl ImagePair {
    pub fn new(corrupted: Image, clean: Image, base_id: impl Into<String>, angle: u16) -> ImagePair {
        ImagePair {
            corrupted,
            clean,
            base_id: base_id.into(),
            angle,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tensor_roundtrip_preserves_pixels() {
        let img = Image::new(2, 2, vec![0, 17, 255, 1, 2, 3, 250, 128, 64, 9, 8, 7]).unwrap();
        let back = Image::from_tensor(&img.to_tensor()).unwrap();
        assert_eq!(img, back);
    }

    #[test]
    fn invalid_extents_rejected() {
        assert!(Image::new(0, 3, vec![]).is_err());
        assert!(Image::new(2, 2, vec![0; 11]).is_err());
    }
}
