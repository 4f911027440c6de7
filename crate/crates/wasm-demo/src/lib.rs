//! Browser demo: corrupt an image, dehaze it with the dark-channel
//! baseline, and score the result — all on RGBA canvas buffers.
//!
//! The exported functions are plain byte-buffer transforms, so the same
//! code paths are unit-tested natively; `wasm-bindgen` only applies when
//! compiling for wasm32.

#[cfg(target_arch = "wasm32")]
use wasm_bindgen::prelude::wasm_bindgen;

use murk_core::data::corrupt::{add_gaussian_noise, add_rain, synth_underwater, RainParams, UnderwaterParams};
use murk_core::data::Image;
use murk_core::dcp::{dehaze, DcpParams};
use murk_core::metrics::{psnr, ssim};

fn image_from_rgba(rgba: &[u8], width: u32, height: u32) -> Option<Image> {
    let (w, h) = (width as usize, height as usize);
    if rgba.len() != w * h * 4 {
        return None;
    }
    let mut rgb = Vec::with_capacity(w * h * 3);
    for px in rgba.chunks_exact(4) {
        rgb.extend_from_slice(&px[..3]);
    }
    Image::new(w, h, rgb).ok()
}

fn rgba_from_image(img: &Image) -> Vec<u8> {
    let mut out = Vec::with_capacity(img.width() * img.height() * 4);
    for px in img.pixels().chunks_exact(3) {
        out.extend_from_slice(px);
        out.push(255);
    }
    out
}

/// Apply a corruption to an RGBA buffer. `kind` is one of `underwater`,
/// `noise`, `rain`; `strength` in [0,1] scales the effect. Returns the
/// corrupted RGBA buffer, or an empty vector on a malformed input.
#[cfg_attr(target_arch = "wasm32", wasm_bindgen)]
pub fn corrupt(rgba: &[u8], width: u32, height: u32, kind: &str, strength: f32, seed: u32) -> Vec<u8> {
    let Some(img) = image_from_rgba(rgba, width, height) else {
        return Vec::new();
    };
    let s = f64::from(strength.clamp(0.0, 1.0));
    let seed = u64::from(seed);
    let result = match kind {
        "underwater" => synth_underwater(
            &img,
            &UnderwaterParams {
                cast_strength: 0.7 * s,
                blur_radius: 2.0 * s,
                noise_sigma: 10.0 * s,
            },
            seed,
        ),
        "noise" => add_gaussian_noise(&img, 50.0 * s, seed),
        "rain" => add_rain(
            &img,
            &RainParams {
                density: 0.01 * s,
                ..RainParams::default()
            },
            seed,
        ),
        _ => return Vec::new(),
    };
    match result {
        Ok(out) => rgba_from_image(&out),
        Err(_) => Vec::new(),
    }
}

/// Dark-channel-prior dehazing on an RGBA buffer.
#[cfg_attr(target_arch = "wasm32", wasm_bindgen)]
pub fn dcp_dehaze(rgba: &[u8], width: u32, height: u32, omega: f32, t0: f32, radius: u32) -> Vec<u8> {
    let Some(img) = image_from_rgba(rgba, width, height) else {
        return Vec::new();
    };
    let params = DcpParams {
        patch_radius: radius as usize,
        omega: f64::from(omega.clamp(0.0, 1.0)),
        t0: f64::from(t0.clamp(0.01, 0.99)),
        ..DcpParams::default()
    };
    rgba_from_image(&dehaze(&img, &params))
}

/// PSNR/SSIM between two equally sized RGBA buffers as a JSON object,
/// e.g. `{"psnr_db":23.41,"ssim":0.8712}`. Errors come back as
/// `{"error":"..."}`.
#[cfg_attr(target_arch = "wasm32", wasm_bindgen)]
pub fn quality(rgba_a: &[u8], rgba_b: &[u8], width: u32, height: u32) -> String {
    let (Some(a), Some(b)) = (
        image_from_rgba(rgba_a, width, height),
        image_from_rgba(rgba_b, width, height),
    ) else {
        return r#"{"error":"buffer size does not match extents"}"#.to_string();
    };
    match (psnr(&a, &b), ssim(&a, &b)) {
        (Ok(p), Ok(s)) => {
            let p = if p.is_finite() { p } else { 99.0 };
            format!(r#"{{"psnr_db":{p:.2},"ssim":{s:.4}}}"#)
        }
        (Err(e), _) | (_, Err(e)) => format!(r#"{{"error":"{e}"}}"#),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn checker_rgba(w: usize, h: usize) -> Vec<u8> {
        let mut out = Vec::with_capacity(w * h * 4);
        for y in 0..h {
            for x in 0..w {
                let v = if (x / 4 + y / 4) % 2 == 0 { 200 } else { 40 };
                out.extend_from_slice(&[v, v / 2 + 20, 255 - v, 255]);
            }
        }
        out
    }

    #[test]
    fn corrupt_roundtrips_rgba_and_is_seeded() {
        let src = checker_rgba(32, 24);
        let a = corrupt(&src, 32, 24, "underwater", 0.5, 7);
        let b = corrupt(&src, 32, 24, "underwater", 0.5, 7);
        let c = corrupt(&src, 32, 24, "underwater", 0.5, 8);
        assert_eq!(a.len(), src.len());
        assert_eq!(a, b);
        assert_ne!(a, c);
        // Zero strength leaves pixels untouched.
        let id = corrupt(&src, 32, 24, "underwater", 0.0, 7);
        assert_eq!(id, src);
        // Unknown kind or bad extents yield empty output.
        assert!(corrupt(&src, 32, 24, "sandstorm", 0.5, 7).is_empty());
        assert!(corrupt(&src, 33, 24, "noise", 0.5, 7).is_empty());
    }

    #[test]
    fn dehaze_runs_and_preserves_extents() {
        let src = checker_rgba(32, 32);
        let hazy = corrupt(&src, 32, 32, "underwater", 0.8, 3);
        let restored = dcp_dehaze(&hazy, 32, 32, 0.95, 0.1, 7);
        assert_eq!(restored.len(), src.len());
        assert!(restored.chunks_exact(4).all(|px| px[3] == 255));
    }

    #[test]
    fn quality_reports_json_scores() {
        let src = checker_rgba(24, 24);
        let noisy = corrupt(&src, 24, 24, "noise", 0.4, 5);
        let json = quality(&src, &noisy, 24, 24);
        assert!(json.starts_with(r#"{"psnr_db":"#), "json: {json}");
        assert!(json.contains("ssim"));
        let self_json = quality(&src, &src, 24, 24);
        assert!(self_json.contains(r#""ssim":1.0000"#), "json: {self_json}");
        let err = quality(&src, &noisy, 25, 24);
        assert!(err.contains("error"));
    }
}
