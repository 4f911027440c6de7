//! Image codecs: binary PPM (P6) always, PNG behind the `png-codec`
//! feature. PPM is the bit-exact fallback for determinism checks.

use std::fs;
use std::path::Path;

use crate::data::Image;
use crate::error::{Error, Result};

pub fn save_ppm(path: &Path, img: &Image) -> Result<()> {
    let mut bytes = format!("P6\n{} {}\n255\n", img.width(), img.height()).into_bytes();
    bytes.extend_from_slice(img.pixels());
    fs::write(path, bytes).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_ppm(path: &Path) -> Result<Image> {
    let name = path.display().to_string();
    let bytes = fs::read(path).map_err(|e| Error::io(&name, e))?;
    parse_ppm(&bytes).map_err(|reason| Error::Data(format!("{name}: {reason}")))
}

fn parse_ppm(bytes: &[u8]) -> std::result::Result<Image, String> {
    let mut pos = 0usize;
    let mut token = |skip_after: bool| -> std::result::Result<String, String> {
        // Skip whitespace and '#' comments.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err("truncated header".into());
        }
        let tok = std::str::from_utf8(&bytes[start..pos])
            .map_err(|_| "non-ASCII header")?
            .to_string();
        if skip_after {
            // Exactly one whitespace byte separates maxval from payload.
            pos += 1;
        }
        Ok(tok)
    };
    if token(false)? != "P6" {
        return Err("not a P6 PPM".into());
    }
    let width: usize = token(false)?.parse().map_err(|_| "bad width")?;
    let height: usize = token(false)?.parse().map_err(|_| "bad height")?;
    let maxval: usize = token(true)?.parse().map_err(|_| "bad maxval")?;
    if maxval != 255 {
        return Err(format!("unsupported maxval {maxval}"));
    }
    let need = width * height * 3;
    if bytes.len() < pos + need {
        return Err(format!("payload truncated: need {need} bytes"));
    }
    Image::new(width, height, bytes[pos..pos + need].to_vec()).map_err(|e| e.to_string())
}

#[cfg(feature = "png-codec")]
pub fn save_png(path: &Path, img: &Image) -> Result<()> {
    let buf = image::RgbImage::from_raw(img.width() as u32, img.height() as u32, img.pixels().to_vec())
        .expect("buffer length checked by Image invariants");
    buf.save_with_format(path, image::ImageFormat::Png)
        .map_err(|e| Error::Data(format!("{}: png encode failed: {e}", path.display())))
}

#[cfg(feature = "png-codec")]
pub fn load_png(path: &Path) -> Result<Image> {
    let name = path.display().to_string();
    let img = image::open(path).map_err(|e| Error::Data(format!("{name}: png decode failed: {e}")))?;
    let rgb = img.to_rgb8();
    Image::new(rgb.width() as usize, rgb.height() as usize, rgb.into_raw())
}

/// Dispatch by extension; `.ppm` always works, `.png` needs the
/// `png-codec` feature.
pub fn save_image(path: &Path, img: &Image) -> Result<()> {
    match extension(path).as_deref() {
        Some("ppm") => save_ppm(path, img),
        #[cfg(feature = "png-codec")]
        Some("png") => save_png(path, img),
        other => Err(Error::Data(format!(
            "{}: unsupported image extension {:?} (use png or ppm)",
            path.display(),
            other
        ))),
    }
}

pub fn load_image(path: &Path) -> Result<Image> {
    match extension(path).as_deref() {
        Some("ppm") => load_ppm(path),
        #[cfg(feature = "png-codec")]
        Some("png") => load_png(path),
        other => Err(Error::Data(format!(
            "{}: unsupported image extension {:?} (use png or ppm)",
            path.display(),
            other
        ))),
    }
}

fn extension(path: &Path) -> Option<String> {
    path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase())
}
