//! Dark-channel-prior dehazing baseline.
//!
//! Scene model I = J·t + A·(1−t): the dark channel of a haze-free patch
//! is near zero, so the observed dark channel estimates the haze. No
//! guided-filter refinement — transmission stays block-min coarse, which
//! is the known source of halo artifacts in this variant.

use crate::data::Image;
use crate::error::Result;
use crate::metrics::Enhancer;

#[derive(Debug, Clone, Copy)]
pub struct DcpParams {
    /// Window radius for the dark-channel min filter (7 → 15×15).
    pub patch_radius: usize,
    /// Haze retention ω; 0 disables dehazing entirely.
    pub omega: f64,
    /// Transmission floor keeping the division stable.
    pub t0: f64,
    /// Fraction of brightest dark-channel pixels used for the
    /// atmospheric-light estimate (0.001 = top 0.1%).
    pub atmospheric_percentile: f64,
}

impl Default for DcpParams {
    fn default() -> Self {
        DcpParams {
            patch_radius: 7,
            omega: 0.95,
            t0: 0.1,
            atmospheric_percentile: 0.001,
        }
    }
}

/// Per-pixel min over RGB followed by a min filter over the
/// (2r+1)² window. Window minima at the borders clamp to the image,
/// which for a min filter is identical to mirroring.
pub fn dark_channel(img: &Image, radius: usize) -> Vec<u8> {
    let (w, h) = (img.width(), img.height());
    let min_rgb: Vec<f64> = img
        .pixels()
        .chunks_exact(3)
        .map(|px| f64::from(px[0].min(px[1]).min(px[2])))
        .collect();
    min_filter(&min_rgb, w, h, radius)
        .into_iter()
        .map(|v| v as u8)
        .collect()
}

/// Separable sliding-window minimum with clamped borders.
fn min_filter(values: &[f64], w: usize, h: usize, radius: usize) -> Vec<f64> {
    if radius == 0 {
        return values.to_vec();
    }
    let mut rows = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(w - 1);
            let mut m = f64::INFINITY;
            for sx in lo..=hi {
                m = m.min(values[y * w + sx]);
            }
            rows[y * w + x] = m;
        }
    }
    let mut out = vec![0.0f64; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(h - 1);
        for x in 0..w {
            let mut m = f64::INFINITY;
            for sy in lo..=hi {
                m = m.min(rows[sy * w + x]);
            }
            out[y * w + x] = m;
        }
    }
    out
}

/// Average color of the brightest-dark-channel pixels (top
/// `percentile` of them, at least one). A percentile of 1.0 degrades to
/// the global mean color.
pub fn estimate_atmospheric(img: &Image, dark: &[u8], percentile: f64) -> [f64; 3] {
    let n = dark.len();
    let count = ((percentile * n as f64).round() as usize).clamp(1, n);
    let mut order: Vec<usize> = (0..n).collect();
    // Brightest dark-channel first; index breaks ties deterministically.
    order.sort_by(|&a, &b| dark[b].cmp(&dark[a]).then(a.cmp(&b)));
    let mut acc = [0.0f64; 3];
    for &i in &order[..count] {
        let px = &img.pixels()[i * 3..i * 3 + 3];
        for c in 0..3 {
            acc[c] += f64::from(px[c]);
        }
    }
    acc.map(|v| v / count as f64)
}

/// Transmission estimate and inversion:
/// t = 1 − ω·dark(I/A), J = (I − A)/max(t, t0) + A, clamped to [0,255].
/// With ω = 0 the transmission is exactly 1 and the output equals the
/// input bitwise.
pub fn dehaze(img: &Image, params: &DcpParams) -> Image {
    let (w, h) = (img.width(), img.height());
    let dark = dark_channel(img, params.patch_radius);
    let a = estimate_atmospheric(img, &dark, params.atmospheric_percentile);
    // Avoid division by zero on pathological (all-black) inputs.
    let a = a.map(|v| v.max(1.0));

    let normalized_min: Vec<f64> = img
        .pixels()
        .chunks_exact(3)
        .map(|px| {
            (f64::from(px[0]) / a[0])
                .min(f64::from(px[1]) / a[1])
                .min(f64::from(px[2]) / a[2])
        })
        .collect();
    let dark_norm = min_filter(&normalized_min, w, h, params.patch_radius);

    let mut pixels = vec![0u8; w * h * 3];
    for i in 0..w * h {
        let t = (1.0 - params.omega * dark_norm[i]).max(params.t0);
        for c in 0..3 {
            let v = f64::from(img.pixels()[i * 3 + c]);
            let j = if t == 1.0 { v } else { (v - a[c]) / t + a[c] };
            pixels[i * 3 + c] = j.round().clamp(0.0, 255.0) as u8;
        }
    }
    Image::new(w, h, pixels).expect("dehaze preserves extents")
}

/// Forward haze synthesis I = J·t + A·(1−t) with a per-pixel
/// transmission map; the oracle for inversion tests.
pub fn synthesize_haze(clean: &Image, atmospheric: [f64; 3], transmission: &[f64]) -> Image {
    debug_assert_eq!(transmission.len(), clean.width() * clean.height());
    let mut pixels = vec![0u8; clean.pixels().len()];
    for i in 0..transmission.len() {
        let t = transmission[i];
        for c in 0..3 {
            let j = f64::from(clean.pixels()[i * 3 + c]);
            let v = j * t + atmospheric[c] * (1.0 - t);
            pixels[i * 3 + c] = v.round().clamp(0.0, 255.0) as u8;
        }
    }
    Image::new(clean.width(), clean.height(), pixels).expect("synthesis preserves extents")
}

pub struct DcpEnhancer {
    pub params: DcpParams,
}

impl Enhancer for DcpEnhancer {
    fn name(&self) -> String {
        "dcp".into()
    }
    fn enhance(&self, img: &Image) -> Result<Image> {
        Ok(dehaze(img, &self.params))
    }
}
