//! Detail equalization and rotation augmentation for paired datasets.

use crate::data::Image;
use crate::error::{Error, Result};
use crate::tensor::reflect_index;

/// The five augmentation angles; rotating each base pair by all of them
/// multiplies the pair count by exactly five.
pub const ROTATION_ANGLES: [u16; 5] = [0, 45, 135, 225, 315];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothKind {
    /// 3×3 mean filter (the default reading of "smoothing filter").
    Box3,
    /// 3×3 binomial kernel [1 2 1]⊗[1 2 1]/16.
    Gaussian3,
}

/// 3×3 box smoothing with reflected borders, rounded to nearest.
pub fn smooth3x3(img: &Image) -> Image {
    smooth3x3_kind(img, SmoothKind::Box3)
}

pub fn smooth3x3_kind(img: &Image, kind: SmoothKind) -> Image {
    let (w, h) = (img.width(), img.height());
    let weights: [(isize, f64); 3] = match kind {
        SmoothKind::Box3 => [(-1, 1.0), (0, 1.0), (1, 1.0)],
        SmoothKind::Gaussian3 => [(-1, 1.0), (0, 2.0), (1, 1.0)],
    };
    let norm: f64 = {
        let s: f64 = weights.iter().map(|(_, v)| v).sum();
        s * s
    };
    let mut out = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (dy, wy) in weights {
                    let sy = reflect_index(y as isize + dy, h);
                    for (dx, wx) in weights {
                        let sx = reflect_index(x as isize + dx, w);
                        acc += wy * wx * f64::from(img.get(sx, sy)[c]);
                    }
                }
                out[(y * w + x) * 3 + c] = (acc / norm).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Image::new(w, h, out).expect("smoothing preserves extents")
}

/// Rotation restricted to the augmentation angle set. Angle 0 is a
/// bitwise identity.
pub fn rotate(img: &Image, angle: u16) -> Result<Image> {
    if !ROTATION_ANGLES.contains(&angle) {
        return Err(Error::Contract(format!(
            "rotation angle {angle} not in {ROTATION_ANGLES:?}"
        )));
    }
    if angle == 0 {
        return Ok(img.clone());
    }
    Ok(rotate_general(img, f64::from(angle)))
}

/// Rotate by any angle about the image center with bilinear
/// interpolation; the canvas keeps the original extents and
/// out-of-support samples reflect back into the image. Multiples of 90°
/// use exact trig so grid points map onto grid points.
pub fn rotate_general(img: &Image, degrees: f64) -> Image {
    let (w, h) = (img.width(), img.height());
    let (sin, cos) = exact_sincos(degrees);
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let mut out = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            // Inverse map: rotate the target point by -angle.
            let dx = x as f64 - cx;
            let dy = y as f64 - cy;
            let sx = cos * dx + sin * dy + cx;
            let sy = -sin * dx + cos * dy + cy;
            let rgb = sample_bilinear(img, sx, sy);
            out[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&rgb);
        }
    }
    Image::new(w, h, out).expect("rotation preserves extents")
}

fn exact_sincos(degrees: f64) -> (f64, f64) {
    let norm = degrees.rem_euclid(360.0);
    match norm {
        0.0 => (0.0, 1.0),
        90.0 => (1.0, 0.0),
        180.0 => (0.0, -1.0),
        270.0 => (-1.0, 0.0),
        _ => {
            let r = norm.to_radians();
            (r.sin(), r.cos())
        }
    }
}

fn sample_bilinear(img: &Image, x: f64, y: f64) -> [u8; 3] {
    let x0 = x.floor();
    let y0 = y.floor();
    let fx = x - x0;
    let fy = y - y0;
    let (w, h) = (img.width(), img.height());
    let xi0 = reflect_index(x0 as isize, w);
    let xi1 = reflect_index(x0 as isize + 1, w);
    let yi0 = reflect_index(y0 as isize, h);
    let yi1 = reflect_index(y0 as isize + 1, h);
    let p00 = img.get(xi0, yi0);
    let p10 = img.get(xi1, yi0);
    let p01 = img.get(xi0, yi1);
    let p11 = img.get(xi1, yi1);
    let mut rgb = [0u8; 3];
    for c in 0..3 {
        let top = f64::from(p00[c]) * (1.0 - fx) + f64::from(p10[c]) * fx;
        let bot = f64::from(p01[c]) * (1.0 - fx) + f64::from(p11[c]) * fx;
        rgb[c] = (top * (1.0 - fy) + bot * fy).round().clamp(0.0, 255.0) as u8;
    }
    rgb
}

/// Bilinear resize, used to equalize pair resolutions before preparation.
pub fn resize_bilinear(img: &Image, width: usize, height: usize) -> Result<Image> {
    if width == 0 || height == 0 {
        return Err(Error::Dim("resize target must be >= 1".into()));
    }
    if width == img.width() && height == img.height() {
        return Ok(img.clone());
    }
    let sx = img.width() as f64 / width as f64;
    let sy = img.height() as f64 / height as f64;
    let mut out = vec![0u8; width * height * 3];
    for y in 0..height {
        for x in 0..width {
            let src_x = (x as f64 + 0.5) * sx - 0.5;
            let src_y = (y as f64 + 0.5) * sy - 0.5;
            let rgb = sample_bilinear(img, src_x, src_y);
            out[(y * width + x) * 3..(y * width + x) * 3 + 3].copy_from_slice(&rgb);
        }
    }
    Image::new(width, height, out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthgen::synthetic_photo;

    #[test]
    fn constant_image_smooths_to_itself() {
        let img = Image::filled(5, 4, [120, 7, 250]);
        assert_eq!(smooth3x3(&img), img);
        assert_eq!(smooth3x3_kind(&img, SmoothKind::Gaussian3), img);
    }

    #[test]
    fn white_center_pixel_becomes_28() {
        // round(255/9) = 28 in the center; edge windows reflect.
        let mut img = Image::filled(3, 3, [0, 0, 0]);
        img.set(1, 1, [255, 255, 255]);
        let s = smooth3x3(&img);
        assert_eq!(s.get(1, 1), [28, 28, 28]);
        // Corner window reflects; it samples the center 4 times:
        // round(4·255/9) = 113.
        assert_eq!(s.get(0, 0), [113, 113, 113]);
    }

    #[test]
    fn rotate_zero_is_bitwise_identity() {
        let img = synthetic_photo(17, 13, 5);
        assert_eq!(rotate(&img, 0).unwrap(), img);
    }

    #[test]
    fn unsupported_angle_is_contract_error() {
        let img = Image::filled(4, 4, [1, 2, 3]);
        assert!(rotate(&img, 90).is_err());
        assert!(rotate(&img, 45).is_ok());
    }

    #[test]
    fn four_quarter_turns_restore_the_image() {
        // Sanity check of the general rotator's interpolation: at exact
        // 90° grid points map to grid points, so four turns are lossless.
        let img = synthetic_photo(16, 16, 9);
        let mut r = img.clone();
        for _ in 0..4 {
            r = rotate_general(&r, 90.0);
        }
        assert_eq!(r, img);
    }
}
