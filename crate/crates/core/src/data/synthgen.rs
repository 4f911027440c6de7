//! Procedural "clean" photographs for fixtures: layered gradients, soft
//! ellipses, and mild texture, so tests never need a dataset download.

use rand::Rng as _;

use crate::data::Image;
use crate::rng::derive_rng;

/// Deterministic natural-ish test image: a vertical gradient background,
/// several soft-edged ellipses (always including one dark and one bright
/// one), and smoothed value noise.
pub fn synthetic_photo(width: usize, height: usize, seed: u64) -> Image {
    let mut rng = derive_rng(seed, &["synthetic-photo"]);
    let mut field = vec![[0.0f64; 3]; width * height];

    let top: [f64; 3] = std::array::from_fn(|_| rng.random_range(40.0..220.0));
    let bottom: [f64; 3] = std::array::from_fn(|_| rng.random_range(40.0..220.0));
    for y in 0..height {
        let t = if height > 1 { y as f64 / (height - 1) as f64 } else { 0.0 };
        for x in 0..width {
            for c in 0..3 {
                field[y * width + x][c] = top[c] * (1.0 - t) + bottom[c] * t;
            }
        }
    }

    let n_shapes = rng.random_range(5..9);
    for shape in 0..n_shapes {
        let cx = rng.random_range(0.0..width as f64);
        let cy = rng.random_range(0.0..height as f64);
        let rx = rng.random_range(0.12..0.45) * width as f64;
        let ry = rng.random_range(0.12..0.45) * height as f64;
        // Guarantee dark and bright content for metric and prior tests.
        let color: [f64; 3] = match shape {
            0 => std::array::from_fn(|_| rng.random_range(0.0..30.0)),
            1 => std::array::from_fn(|_| rng.random_range(225.0..255.0)),
            _ => std::array::from_fn(|_| rng.random_range(0.0..255.0)),
        };
        for y in 0..height {
            for x in 0..width {
                let dx = (x as f64 - cx) / rx;
                let dy = (y as f64 - cy) / ry;
                let d = (dx * dx + dy * dy).sqrt();
                // Soft edge between 0.85 and 1.15 of the radius.
                let alpha = ((1.15 - d) / 0.3).clamp(0.0, 1.0);
                if alpha > 0.0 {
                    for c in 0..3 {
                        let v = &mut field[y * width + x][c];
                        *v = *v * (1.0 - alpha) + color[c] * alpha;
                    }
                }
            }
        }
    }

    // Value noise, box-smoothed once so it reads as texture, not static.
    let amp = rng.random_range(4.0..10.0);
    let raw: Vec<f64> = (0..width * height).map(|_| rng.random_range(-amp..amp)).collect();
    for y in 0..height {
        for x in 0..width {
            let mut acc = 0.0;
            let mut n = 0.0;
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    let sy = y as isize + dy;
                    let sx = x as isize + dx;
                    if sy >= 0 && sy < height as isize && sx >= 0 && sx < width as isize {
                        acc += raw[sy as usize * width + sx as usize];
                        n += 1.0;
                    }
                }
            }
            let t = acc / n;
            for c in 0..3 {
                field[y * width + x][c] += t;
            }
        }
    }

    let mut pixels = vec![0u8; width * height * 3];
    for (i, px) in field.iter().enumerate() {
        for c in 0..3 {
            pixels[i * 3 + c] = px[c].round().clamp(0.0, 255.0) as u8;
        }
    }
    Image::new(width, height, pixels).expect("generator extents are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic_and_textured() {
        let a = synthetic_photo(32, 24, 7);
        let b = synthetic_photo(32, 24, 7);
        assert_eq!(a, b);
        let c = synthetic_photo(32, 24, 8);
        assert_ne!(a, c);
        // Not a constant image.
        let first = a.get(0, 0);
        assert!((0..24).any(|y| (0..32).any(|x| a.get(x, y) != first)));
    }
}
