//! PSNR and SSIM scoring with per-image wall-clock timing.

use std::time::Instant;

use crate::data::{Image, ImagePair};
use crate::error::{Error, Result};
use crate::model::{IptModel, TaskId};

/// 10·log10(255²/MSE) over all channels and pixels; +∞ for identical
/// images. The peak is fixed at 255 regardless of internal float scale.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::Dim(format!(
            "psnr needs matching extents, got {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    let mut sq = 0.0f64;
    for (&x, &y) in a.pixels().iter().zip(b.pixels()) {
        let d = f64::from(x) - f64::from(y);
        sq += d * d;
    }
    let mse = sq / a.pixels().len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (255.0 * 255.0 / mse).log10())
}

/// Which plane(s) SSIM is computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SsimMode {
    /// Luma Y = 0.299R + 0.587G + 0.114B (the restoration convention).
    Luma,
    /// Mean of the three per-channel SSIM values.
    ChannelMean,
}

pub const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const C1: f64 = (0.01 * 255.0) * (0.01 * 255.0);
const C2: f64 = (0.03 * 255.0) * (0.03 * 255.0);

/// Single-scale SSIM: 11×11 Gaussian window (σ = 1.5), C1 = (0.01·255)²,
/// C2 = (0.03·255)², averaged over every valid window position.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    ssim_mode(a, b, SsimMode::Luma)
}

pub fn ssim_mode(a: &Image, b: &Image, mode: SsimMode) -> Result<f64> {
    if (a.width(), a.height()) != (b.width(), b.height()) {
        return Err(Error::Dim(format!(
            "ssim needs matching extents, got {}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(Error::Contract(format!(
            "ssim needs extents >= {SSIM_WINDOW}, got {}x{}",
            a.width(),
            a.height()
        )));
    }
    match mode {
        SsimMode::Luma => Ok(ssim_plane(&luma(a), &luma(b), a.width(), a.height())),
        SsimMode::ChannelMean => {
            let mut acc = 0.0;
            for c in 0..3 {
                acc += ssim_plane(&plane(a, c), &plane(b, c), a.width(), a.height());
            }
            Ok(acc / 3.0)
        }
    }
}

fn luma(img: &Image) -> Vec<f64> {
    img.pixels()
        .chunks_exact(3)
        .map(|px| 0.299 * f64::from(px[0]) + 0.587 * f64::from(px[1]) + 0.114 * f64::from(px[2]))
        .collect()
}

fn plane(img: &Image, c: usize) -> Vec<f64> {
    img.pixels().iter().skip(c).step_by(3).map(|&v| f64::from(v)).collect()
}

fn gaussian_kernel() -> [f64; SSIM_WINDOW] {
    let mut k = [0.0; SSIM_WINDOW];
    let half = (SSIM_WINDOW / 2) as isize;
    let mut sum = 0.0;
    for (i, v) in k.iter_mut().enumerate() {
        let d = i as isize - half;
        *v = (-0.5 * (d as f64 / SSIM_SIGMA).powi(2)).exp();
        sum += *v;
    }
    for v in &mut k {
        *v /= sum;
    }
    k
}

/// Separable Gaussian filtering of the five moment maps, valid windows
/// only. The brute-force per-window reference used by the tests walks a
/// different arithmetic route.
fn ssim_plane(x: &[f64], y: &[f64], w: usize, h: usize) -> f64 {
    let k = gaussian_kernel();
    let filter = |src: &[f64]| -> Vec<f64> {
        // Horizontal valid pass: (w-10) × h.
        let vw = w - SSIM_WINDOW + 1;
        let mut tmp = vec![0.0; vw * h];
        for row in 0..h {
            for col in 0..vw {
                let mut acc = 0.0;
                for (i, &kv) in k.iter().enumerate() {
                    acc += kv * src[row * w + col + i];
                }
                tmp[row * vw + col] = acc;
            }
        }
        // Vertical valid pass: vw × (h-10).
        let vh = h - SSIM_WINDOW + 1;
        let mut out = vec![0.0; vw * vh];
        for row in 0..vh {
            for col in 0..vw {
                let mut acc = 0.0;
                for (i, &kv) in k.iter().enumerate() {
                    acc += kv * tmp[(row + i) * vw + col];
                }
                out[row * vw + col] = acc;
            }
        }
        out
    };

    let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
    let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
    let xy: Vec<f64> = x.iter().zip(y).map(|(a, b)| a * b).collect();

    let mu_x = filter(x);
    let mu_y = filter(y);
    let e_xx = filter(&xx);
    let e_yy = filter(&yy);
    let e_xy = filter(&xy);

    let mut acc = 0.0;
    for i in 0..mu_x.len() {
        let (mx, my) = (mu_x[i], mu_y[i]);
        let vx = e_xx[i] - mx * mx;
        let vy = e_yy[i] - my * my;
        let cov = e_xy[i] - mx * my;
        let s = ((2.0 * mx * my + C1) * (2.0 * cov + C2))
            / ((mx * mx + my * my + C1) * (vx + vy + C2));
        acc += s;
    }
    acc / mu_x.len() as f64
}

/// Anything that maps a corrupted image to a restored one. A trained
/// model is read-only during inference, so enhancers are shareable
/// across threads.
pub trait Enhancer: Sync {
    fn name(&self) -> String;
    fn enhance(&self, img: &Image) -> Result<Image>;
}

/// Pass-through used to score the corrupted inputs themselves and to
/// verify I/O plumbing is lossless.
pub struct IdentityEnhancer;

impl Enhancer for IdentityEnhancer {
    fn name(&self) -> String {
        "identity".into()
    }
    fn enhance(&self, img: &Image) -> Result<Image> {
        Ok(img.clone())
    }
}

/// Runs the transformer on the chosen task.
pub struct IptEnhancer<'a> {
    pub model: &'a IptModel,
    pub task: TaskId,
}

impl Enhancer for IptEnhancer<'_> {
    fn name(&self) -> String {
        format!("ipt-{}", self.task)
    }
    fn enhance(&self, img: &Image) -> Result<Image> {
        let out = self.model.infer_tiled(&img.to_tensor(), self.task)?;
        Image::from_tensor(&out)
    }
}

#[derive(Debug, Clone)]
pub struct MetricRow {
    pub id: String,
    pub psnr_db: f64,
    pub ssim: f64,
    pub elapsed_ms: f64,
}

/// Per-image scores plus their arithmetic means.
#[derive(Debug, Clone)]
pub struct MetricReport {
    pub method: String,
    pub per_image: Vec<MetricRow>,
    pub mean_psnr_db: f64,
    pub mean_ssim: f64,
    pub mean_elapsed_ms: f64,
}

impl MetricReport {
    pub fn from_rows(method: String, per_image: Vec<MetricRow>) -> MetricReport {
        let n = per_image.len() as f64;
        let mean = |f: fn(&MetricRow) -> f64| per_image.iter().map(f).sum::<f64>() / n;
        MetricReport {
            mean_psnr_db: mean(|r| r.psnr_db),
            mean_ssim: mean(|r| r.ssim),
            mean_elapsed_ms: mean(|r| r.elapsed_ms),
            method,
            per_image,
        }
    }
}

/// Run the enhancer over every pair, scoring against the clean member and
/// timing each enhancement. Inference is serialized so the per-image
/// wall-clock numbers stay honest.
pub fn evaluate(enhancer: &dyn Enhancer, pairs: &[ImagePair]) -> Result<MetricReport> {
    if pairs.is_empty() {
        return Err(Error::Contract("evaluate needs a nonempty test set".into()));
    }
    let mut rows = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let started = Instant::now();
        let restored = enhancer.enhance(&pair.corrupted)?;
        let elapsed_ms = started.elapsed().as_secs_f64() * 1e3;
        rows.push(MetricRow {
            id: format!("{}__r{:03}", pair.base_id, pair.angle),
            psnr_db: psnr(&restored, &pair.clean)?,
            ssim: ssim(&restored, &pair.clean)?,
            elapsed_ms,
        });
    }
    Ok(MetricReport::from_rows(enhancer.name(), rows))
}

/// CSV rows: `method,id,psnr_db,ssim,elapsed_ms`.
pub fn render_csv(reports: &[MetricReport]) -> String {
    let mut out = String::from("method,id,psnr_db,ssim,elapsed_ms\n");
    for r in reports {
        for row in &r.per_image {
            out.push_str(&format!(
                "{},{},{:.4},{:.6},{:.3}\n",
                r.method, row.id, row.psnr_db, row.ssim, row.elapsed_ms
            ));
        }
    }
    out
}

/// Aligned comparison table (Method / PSNR / SSIM columns).
pub fn render_table(reports: &[MetricReport]) -> String {
    let name_w = reports
        .iter()
        .map(|r| r.method.len())
        .chain(["Method".len()])
        .max()
        .unwrap_or(6);
    let mut out = format!("{:<name_w$}  {:>8}  {:>7}\n", "Method", "PSNR", "SSIM");
    for r in reports {
        out.push_str(&format!(
            "{:<name_w$}  {:>8.2}  {:>7.4}\n",
            r.method, r.mean_psnr_db, r.mean_ssim
        ));
    }
    out
}
