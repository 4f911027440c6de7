//! Synthetic corruption generators: Gaussian noise, rain streaks,
//! box downscaling, and an underwater degradation model. All are
//! deterministic per seed.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, Poisson};

use crate::data::augment;
use crate::data::Image;
use crate::error::{Error, Result};
use crate::rng::{derive_rng, Rng};

/// i.i.d. N(0, sigma²) samples on the 0–255 scale, before any clamping.
/// Exposed so the statistical oracles measure exactly what the image path
/// adds.
pub fn gaussian_noise_field(n: usize, sigma: f64, seed: u64) -> Vec<f64> {
    if sigma == 0.0 {
        return vec![0.0; n];
    }
    let mut rng = derive_rng(seed, &["gaussian-noise"]);
    let dist = Normal::new(0.0, sigma).expect("sigma >= 0");
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

/// Per-channel Gaussian noise added on the 0–255 scale, then clamped and
/// rounded. `sigma = 0` is a bitwise identity.
pub fn add_gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Result<Image> {
    if sigma < 0.0 {
        return Err(Error::Contract(format!("sigma must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let noise = gaussian_noise_field(img.pixels().len(), sigma, seed);
    let pixels = img
        .pixels()
        .iter()
        .zip(&noise)
        .map(|(&v, &n)| (f64::from(v) + n).round().clamp(0.0, 255.0) as u8)
        .collect();
    Image::new(img.width(), img.height(), pixels)
}

#[derive(Debug, Clone, Copy)]
pub struct RainParams {
    /// Expected streaks per pixel; the streak count is Poisson(density·W·H).
    pub density: f64,
    /// Mean streak length in pixels.
    pub length: f64,
    /// Slant of the streaks, degrees clockwise from vertical.
    pub angle_deg: f64,
    /// Added brightness at full streak coverage, 0–255 scale.
    pub intensity: f64,
}

impl Default for RainParams {
    fn default() -> Self {
        RainParams {
            density: 0.002,
            length: 9.0,
            angle_deg: 12.0,
            intensity: 110.0,
        }
    }
}

/// Number of streaks drawn for this image/seed.
pub fn rain_streak_count(density: f64, width: usize, height: usize, rng: &mut Rng) -> usize {
    let lambda = density * (width * height) as f64;
    if lambda <= 0.0 {
        return 0;
    }
    let pois = Poisson::new(lambda).expect("lambda > 0");
    pois.sample(rng) as usize
}

/// Additive anti-aliased bright line segments at the given slant.
/// Output is pixelwise >= input before clamping (and after, since the
/// addition is nonnegative).
pub fn add_rain(img: &Image, params: &RainParams, seed: u64) -> Result<Image> {
    if !(0.0..=1.0).contains(&params.density) {
        return Err(Error::Contract(format!(
            "rain density must be in [0,1], got {}",
            params.density
        )));
    }
    if params.density == 0.0 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width(), img.height());
    let mut rng = derive_rng(seed, &["rain"]);
    let count = rain_streak_count(params.density, w, h, &mut rng);

    // Coverage buffer; each streak splats bilinear weights along its path.
    let mut alpha = vec![0.0f64; w * h];
    let dir = (params.angle_deg.to_radians().sin(), params.angle_deg.to_radians().cos());
    for _ in 0..count {
        let x0 = rng.random_range(0.0..w as f64);
        let y0 = rng.random_range(0.0..h as f64);
        let len = params.length * rng.random_range(0.7..1.3);
        let steps = (len * 4.0).ceil() as usize;
        for s in 0..=steps {
            let t = s as f64 / 4.0;
            if t > len {
                break;
            }
            let x = x0 + dir.0 * t;
            let y = y0 + dir.1 * t;
            splat(&mut alpha, w, h, x, y, 0.25);
        }
    }
    for a in &mut alpha {
        *a = a.min(1.0);
    }

    let mut pixels = img.pixels().to_vec();
    for y in 0..h {
        for x in 0..w {
            let add = params.intensity * alpha[y * w + x];
            if add > 0.0 {
                for c in 0..3 {
                    let i = (y * w + x) * 3 + c;
                    pixels[i] = (f64::from(pixels[i]) + add).round().clamp(0.0, 255.0) as u8;
                }
            }
        }
    }
    Image::new(w, h, pixels)
}

fn splat(alpha: &mut [f64], w: usize, h: usize, x: f64, y: f64, weight: f64) {
    let x0 = x.floor() as isize;
    let y0 = y.floor() as isize;
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let quads = [
        (x0, y0, (1.0 - fx) * (1.0 - fy)),
        (x0 + 1, y0, fx * (1.0 - fy)),
        (x0, y0 + 1, (1.0 - fx) * fy),
        (x0 + 1, y0 + 1, fx * fy),
    ];
    for (xi, yi, wgt) in quads {
        if xi >= 0 && (xi as usize) < w && yi >= 0 && (yi as usize) < h {
            alpha[yi as usize * w + xi as usize] += weight * wgt;
        }
    }
}

/// Box-average downsampling by 2 or 4; extents that do not divide are
/// reflect-padded on the right/bottom first.
pub fn downscale(img: &Image, factor: usize) -> Result<Image> {
    if factor != 2 && factor != 4 {
        return Err(Error::Contract(format!("downscale factor must be 2 or 4, got {factor}")));
    }
    let src = pad_to_multiple(img, factor);
    let (w, h) = (src.width() / factor, src.height() / factor);
    let mut pixels = vec![0u8; w * h * 3];
    let area = (factor * factor) as f64;
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for dy in 0..factor {
                    for dx in 0..factor {
                        acc += f64::from(src.get(x * factor + dx, y * factor + dy)[c]);
                    }
                }
                pixels[(y * w + x) * 3 + c] = (acc / area).round().clamp(0.0, 255.0) as u8;
            }
        }
    }
    Image::new(w, h, pixels)
}

/// Nearest-neighbor upscale (each pixel becomes a factor×factor block).
pub fn upscale_nearest(img: &Image, factor: usize) -> Result<Image> {
    if factor == 0 {
        return Err(Error::Contract("upscale factor must be >= 1".into()));
    }
    let (w, h) = (img.width() * factor, img.height() * factor);
    let mut pixels = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let rgb = img.get(x / factor, y / factor);
            pixels[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&rgb);
        }
    }
    Image::new(w, h, pixels)
}

fn pad_to_multiple(img: &Image, factor: usize) -> Image {
    let w = img.width().next_multiple_of(factor);
    let h = img.height().next_multiple_of(factor);
    if w == img.width() && h == img.height() {
        return img.clone();
    }
    let mut pixels = vec![0u8; w * h * 3];
    for y in 0..h {
        for x in 0..w {
            let sx = crate::tensor::reflect_index(x as isize, img.width());
            let sy = crate::tensor::reflect_index(y as isize, img.height());
            let rgb = img.get(sx, sy);
            pixels[(y * w + x) * 3..(y * w + x) * 3 + 3].copy_from_slice(&rgb);
        }
    }
    Image::new(w, h, pixels).expect("padding preserves validity")
}

#[derive(Debug, Clone, Copy)]
pub struct UnderwaterParams {
    /// 0 disables the color cast; larger values attenuate red and push
    /// blue/green.
    pub cast_strength: f64,
    /// Gaussian blur sigma in pixels; 0 disables the blur.
    pub blur_radius: f64,
    /// Added sensor noise sigma on the 0–255 scale; 0 disables it.
    pub noise_sigma: f64,
}

impl Default for UnderwaterParams {
    fn default() -> Self {
        UnderwaterParams {
            cast_strength: 0.45,
            blur_radius: 1.0,
            noise_sigma: 18.0,
        }
    }
}

/// Underwater-style degradation: attenuate red, push blue/green, blur,
/// add mild noise. All-zero parameters are a bitwise identity.
pub fn synth_underwater(img: &Image, params: &UnderwaterParams, seed: u64) -> Result<Image> {
    if params.cast_strength < 0.0 || params.blur_radius < 0.0 || params.noise_sigma < 0.0 {
        return Err(Error::Contract("underwater parameters must be nonnegative".into()));
    }
    if params.cast_strength == 0.0 && params.blur_radius == 0.0 && params.noise_sigma == 0.0 {
        return Ok(img.clone());
    }
    let (w, h) = (img.width(), img.height());
    let mut field = vec![0.0f64; w * h * 3];
    for (i, &v) in img.pixels().iter().enumerate() {
        field[i] = f64::from(v);
    }

    let cast = params.cast_strength;
    if cast > 0.0 {
        for px in field.chunks_exact_mut(3) {
            px[0] *= 1.0 - 0.80 * cast; // red absorbed fastest
            px[1] *= 1.0 - 0.15 * cast;
            px[1] += cast * 0.10 * (255.0 - px[1]);
            px[2] += cast * 0.35 * (255.0 - px[2]); // blue dominates
        }
    }

    if params.blur_radius > 0.0 {
        gaussian_blur_inplace(&mut field, w, h, params.blur_radius);
    }

    if params.noise_sigma > 0.0 {
        let noise = gaussian_noise_field(field.len(), params.noise_sigma, seed);
        for (v, n) in field.iter_mut().zip(&noise) {
            *v += n;
        }
    }

    let pixels = field.iter().map(|&v| v.round().clamp(0.0, 255.0) as u8).collect();
    Image::new(w, h, pixels)
}

/// Separable Gaussian blur on an interleaved f64 RGB buffer, reflected
/// borders.
fn gaussian_blur_inplace(field: &mut [f64], w: usize, h: usize, sigma: f64) {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut kernel = Vec::with_capacity((2 * radius + 1) as usize);
    let mut sum = 0.0;
    for i in -radius..=radius {
        let v = (-0.5 * (i as f64 / sigma).powi(2)).exp();
        kernel.push(v);
        sum += v;
    }
    for k in &mut kernel {
        *k /= sum;
    }

    let mut tmp = vec![0.0f64; field.len()];
    // Horizontal.
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (ki, &kv) in kernel.iter().enumerate() {
                    let sx = crate::tensor::reflect_index(x as isize + ki as isize - radius, w);
                    acc += kv * field[(y * w + sx) * 3 + c];
                }
                tmp[(y * w + x) * 3 + c] = acc;
            }
        }
    }
    // Vertical.
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let mut acc = 0.0;
                for (ki, &kv) in kernel.iter().enumerate() {
                    let sy = crate::tensor::reflect_index(y as isize + ki as isize - radius, h);
                    acc += kv * tmp[(sy * w + x) * 3 + c];
                }
                field[(y * w + x) * 3 + c] = acc;
            }
        }
    }
}

/// Corruption kinds the synthesizer command can produce.
#[derive(Debug, Clone)]
pub enum CorruptionKind {
    Noise { sigma: f64 },
    Rain(RainParams),
    Downscale { factor: usize },
    Underwater(UnderwaterParams),
}

impl CorruptionKind {
    /// Apply this corruption to a clean image; for `Downscale` the result
    /// has smaller extents (super-resolution pairing).
    pub fn apply(&self, clean: &Image, seed: u64) -> Result<Image> {
        match self {
            CorruptionKind::Noise { sigma } => add_gaussian_noise(clean, *sigma, seed),
            CorruptionKind::Rain(p) => add_rain(clean, p, seed),
            CorruptionKind::Downscale { factor } => downscale(clean, *factor),
            CorruptionKind::Underwater(p) => synth_underwater(clean, p, seed),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            CorruptionKind::Noise { .. } => "noise",
            CorruptionKind::Rain(_) => "rain",
            CorruptionKind::Downscale { .. } => "downscale",
            CorruptionKind::Underwater(_) => "underwater",
        }
    }
}

// Re-export for pipeline callers that equalize pair extents.
pub use augment::resize_bilinear;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synthgen::synthetic_photo;

    #[test]
    fn zero_parameters_are_identities() {
        let img = synthetic_photo(20, 14, 3);
        assert_eq!(add_gaussian_noise(&img, 0.0, 1).unwrap(), img);
        let no_rain = RainParams { density: 0.0, ..RainParams::default() };
        assert_eq!(add_rain(&img, &no_rain, 1).unwrap(), img);
        let id = UnderwaterParams { cast_strength: 0.0, blur_radius: 0.0, noise_sigma: 0.0 };
        assert_eq!(synth_underwater(&img, &id, 1).unwrap(), img);
    }

    #[test]
    fn rain_is_additive_pixelwise() {
        let img = Image::filled(32, 32, [40, 50, 60]);
        let rained = add_rain(&img, &RainParams { density: 0.01, ..Default::default() }, 7).unwrap();
        for (a, b) in rained.pixels().iter().zip(img.pixels()) {
            assert!(a >= b);
        }
        assert_ne!(rained, img);
    }

    #[test]
    fn downscale_averages_blocks_exactly() {
        // 2x2 blocks of constant color collapse to that color.
        let mut img = Image::filled(4, 4, [0, 0, 0]);
        for y in 0..4 {
            for x in 0..4 {
                let v = ((x / 2) * 2 + (y / 2) * 10) as u8 * 10 + 5;
                img.set(x, y, [v, v, v]);
            }
        }
        let d = downscale(&img, 2).unwrap();
        assert_eq!((d.width(), d.height()), (2, 2));
        for y in 0..2 {
            for x in 0..2 {
                let v = ((x * 2 + y * 10) as u8) * 10 + 5;
                assert_eq!(d.get(x, y), [v, v, v]);
            }
        }
        // Upscale-nearest then downscale of a constant image round-trips.
        let c = Image::filled(6, 5, [9, 90, 200]);
        let rt = downscale(&upscale_nearest(&c, 2).unwrap(), 2).unwrap();
        assert_eq!(rt, c);
    }

    #[test]
    fn underwater_cast_pushes_blue_over_red() {
        let img = synthetic_photo(24, 24, 11);
        let mean = |im: &Image, c: usize| -> f64 {
            im.pixels().iter().skip(c).step_by(3).map(|&v| f64::from(v)).sum::<f64>()
                / (im.width() * im.height()) as f64
        };
        let base_gap = mean(&img, 2) - mean(&img, 0);
        let p = UnderwaterParams { cast_strength: 0.3, blur_radius: 0.0, noise_sigma: 0.0 };
        let uw = synth_underwater(&img, &p, 1).unwrap();
        let gap = mean(&uw, 2) - mean(&uw, 0);
        assert!(gap > base_gap, "blue-red gap {gap} did not grow from {base_gap}");
    }
}
