//! Train/test manifests with base-level splitting.
//!
//! Bases are split before augmentation so no rotated copy of a training
//! image can leak into the test side; augmenting both sides afterwards
//! still reproduces the published counts (1500 bases → 6000/1500).

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;

use crate::data::augment::{self, SmoothKind, ROTATION_ANGLES};
use crate::data::{io, ImagePair};
use crate::error::{Error, Result};
use crate::rng::derive_rng;

pub const AUG_ANGLES: [u16; 5] = ROTATION_ANGLES;

/// Reference to one augmented pair: which base, which rotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PairRef {
    pub base_id: String,
    pub angle: u16,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetManifest {
    pub train: Vec<PairRef>,
    pub test: Vec<PairRef>,
    pub seed: u64,
}

impl DatasetManifest {
    pub fn train_bases(&self) -> Vec<&str> {
        unique_bases(&self.train)
    }

    pub fn test_bases(&self) -> Vec<&str> {
        unique_bases(&self.test)
    }
}

fn unique_bases(refs: &[PairRef]) -> Vec<&str> {
    let mut out: Vec<&str> = Vec::new();
    for r in refs {
        if !out.contains(&r.base_id.as_str()) {
            out.push(&r.base_id);
        }
    }
    out
}

/// Split base ids (shuffled by seed) into train/test by `train_fraction`,
/// then expand each side by the five rotation angles. No base id ever
/// appears on both sides.
pub fn build_manifest(base_ids: &[String], train_fraction: f64, seed: u64) -> Result<DatasetManifest> {
    if base_ids.is_empty() {
        return Err(Error::Contract("cannot build a manifest from zero base pairs".into()));
    }
    if !(0.0..=1.0).contains(&train_fraction) {
        return Err(Error::Contract(format!(
            "train fraction must be in [0,1], got {train_fraction}"
        )));
    }
    let mut sorted: Vec<String> = base_ids.to_vec();
    sorted.sort();
    sorted.dedup();
    if sorted.len() != base_ids.len() {
        return Err(Error::Data("duplicate base ids in dataset".into()));
    }

    let mut rng = derive_rng(seed, &["split"]);
    sorted.shuffle(&mut rng);
    let n_train = ((train_fraction * sorted.len() as f64).floor() as usize).min(sorted.len());

    let expand = |bases: &[String]| -> Vec<PairRef> {
        bases
            .iter()
            .flat_map(|b| {
                AUG_ANGLES.iter().map(move |&angle| PairRef {
                    base_id: b.clone(),
                    angle,
                })
            })
            .collect()
    };
    Ok(DatasetManifest {
        train: expand(&sorted[..n_train]),
        test: expand(&sorted[n_train..]),
        seed,
    })
}

/// Line-oriented persistence: `split<TAB>base_id<TAB>angle`, with a
/// leading `#seed` comment.
pub fn save_manifest(path: &Path, manifest: &DatasetManifest) -> Result<()> {
    let mut text = format!("#seed\t{}\n", manifest.seed);
    for (split, refs) in [("train", &manifest.train), ("test", &manifest.test)] {
        for r in refs {
            text.push_str(&format!("{split}\t{}\t{}\n", r.base_id, r.angle));
        }
    }
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_manifest(path: &Path) -> Result<DatasetManifest> {
    let name = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|e| Error::io(&name, e))?;
    let mut manifest = DatasetManifest {
        train: Vec::new(),
        test: Vec::new(),
        seed: 0,
    };
    for (ln, line) in text.lines().enumerate() {
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix("#seed\t") {
            manifest.seed = rest
                .trim()
                .parse()
                .map_err(|_| Error::Data(format!("{name}:{}: bad seed", ln + 1)))?;
            continue;
        }
        if line.starts_with('#') {
            continue;
        }
        let mut parts = line.split('\t');
        let (split, base, angle) = (parts.next(), parts.next(), parts.next());
        let (Some(split), Some(base), Some(angle)) = (split, base, angle) else {
            return Err(Error::Data(format!("{name}:{}: expected split\\tbase\\tangle", ln + 1)));
        };
        let angle: u16 = angle
            .parse()
            .map_err(|_| Error::Data(format!("{name}:{}: bad angle '{angle}'", ln + 1)))?;
        let r = PairRef { base_id: base.to_string(), angle };
        match split {
            "train" => manifest.train.push(r),
            "test" => manifest.test.push(r),
            other => return Err(Error::Data(format!("{name}:{}: unknown split '{other}'", ln + 1))),
        }
    }
    if manifest.train.is_empty() && manifest.test.is_empty() {
        return Err(Error::Data(format!("{name}: manifest has no entries")));
    }
    Ok(manifest)
}

/// Raw dataset layout: `<root>/corrupted/<id>.<ext>` and
/// `<root>/clean/<id>.<ext>` with matching ids.
pub fn scan_pairs(root: &Path) -> Result<Vec<(String, PathBuf, PathBuf)>> {
    let list = |sub: &str| -> Result<BTreeMap<String, PathBuf>> {
        let dir = root.join(sub);
        let mut out = BTreeMap::new();
        let entries = fs::read_dir(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
        for entry in entries {
            let entry = entry.map_err(|e| Error::io(dir.display().to_string(), e))?;
            let path = entry.path();
            let Some(ext) = path.extension().map(|e| e.to_string_lossy().to_ascii_lowercase()) else {
                continue;
            };
            if ext != "png" && ext != "ppm" {
                continue;
            }
            let stem = path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_default();
            out.insert(stem, path);
        }
        Ok(out)
    };
    let corrupted = list("corrupted")?;
    let clean = list("clean")?;
    if corrupted.is_empty() {
        return Err(Error::Data(format!("{}: no images under corrupted/", root.display())));
    }
    let mut pairs = Vec::new();
    for (id, cpath) in &corrupted {
        let Some(gpath) = clean.get(id) else {
            return Err(Error::Data(format!("missing clean counterpart for id '{id}'")));
        };
        pairs.push((id.clone(), cpath.clone(), gpath.clone()));
    }
    for id in clean.keys() {
        if !corrupted.contains_key(id) {
            return Err(Error::Data(format!("missing corrupted counterpart for id '{id}'")));
        }
    }
    Ok(pairs)
}

/// Which members of a pair get the 3×3 smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmoothTarget {
    /// Only the clean (higher-detail) member; the default reading.
    CleanOnly,
    Both,
    None,
}

#[derive(Debug, Clone)]
pub struct PrepareConfig {
    pub smooth: SmoothTarget,
    pub smooth_kind: SmoothKind,
    pub train_fraction: f64,
    pub seed: u64,
    /// Output codec extension: "png" or "ppm".
    pub ext: String,
}

impl Default for PrepareConfig {
    fn default() -> Self {
        PrepareConfig {
            smooth: SmoothTarget::CleanOnly,
            smooth_kind: SmoothKind::Box3,
            train_fraction: 0.8,
            seed: 0,
            ext: "png".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrepareSummary {
    pub train_pairs: usize,
    pub test_pairs: usize,
}

/// Full preparation: scan pairs, equalize extents (clean is resized to
/// the corrupted extents when they differ), smooth, split bases, rotate
/// both members by the five angles, write images + manifest.
pub fn prepare_dataset(root: &Path, out: &Path, cfg: &PrepareConfig) -> Result<PrepareSummary> {
    let pairs = scan_pairs(root)?;
    let ids: Vec<String> = pairs.iter().map(|(id, _, _)| id.clone()).collect();
    let manifest = build_manifest(&ids, cfg.train_fraction, cfg.seed)?;

    for sub in ["corrupted", "clean"] {
        fs::create_dir_all(out.join(sub)).map_err(|e| Error::io(out.display().to_string(), e))?;
    }

    let process = |(id, cpath, gpath): &(String, PathBuf, PathBuf)| -> Result<()> {
        let mut corrupted = io::load_image(cpath)?;
        let mut clean = io::load_image(gpath)?;
        if (clean.width(), clean.height()) != (corrupted.width(), corrupted.height()) {
            clean = augment::resize_bilinear(&clean, corrupted.width(), corrupted.height())?;
        }
        match cfg.smooth {
            SmoothTarget::CleanOnly => clean = augment::smooth3x3_kind(&clean, cfg.smooth_kind),
            SmoothTarget::Both => {
                clean = augment::smooth3x3_kind(&clean, cfg.smooth_kind);
                corrupted = augment::smooth3x3_kind(&corrupted, cfg.smooth_kind);
            }
            SmoothTarget::None => {}
        }
        for &angle in &AUG_ANGLES {
            let rc = augment::rotate(&corrupted, angle)?;
            let rg = augment::rotate(&clean, angle)?;
            io::save_image(&pair_path(out, "corrupted", id, angle, &cfg.ext), &rc)?;
            io::save_image(&pair_path(out, "clean", id, angle, &cfg.ext), &rg)?;
        }
        Ok(())
    };
    // Pairs are independent units of pure work; outputs do not depend on
    // scheduling.
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        pairs.par_iter().try_for_each(process)?;
    }
    #[cfg(not(feature = "parallel"))]
    pairs.iter().try_for_each(process)?;
    save_manifest(&out.join("manifest.tsv"), &manifest)?;
    Ok(PrepareSummary {
        train_pairs: manifest.train.len(),
        test_pairs: manifest.test.len(),
    })
}

pub fn pair_path(root: &Path, side: &str, base_id: &str, angle: u16, ext: &str) -> PathBuf {
    root.join(side).join(format!("{base_id}__r{angle:03}.{ext}"))
}

/// Load the images referenced by one side of a manifest from a prepared
/// directory.
pub fn load_pairs(prepared_root: &Path, refs: &[PairRef]) -> Result<Vec<ImagePair>> {
    let ext = detect_ext(prepared_root)?;
    refs.iter()
        .map(|r| {
            let c = io::load_image(&pair_path(prepared_root, "corrupted", &r.base_id, r.angle, &ext))?;
            let g = io::load_image(&pair_path(prepared_root, "clean", &r.base_id, r.angle, &ext))?;
            if (c.width(), c.height()) != (g.width(), g.height()) {
                return Err(Error::Data(format!(
                    "pair '{}' angle {} has mismatched extents {}x{} vs {}x{}",
                    r.base_id,
                    r.angle,
                    c.width(),
                    c.height(),
                    g.width(),
                    g.height()
                )));
            }
            Ok(ImagePair::new(c, g, r.base_id.clone(), r.angle))
        })
        .collect()
}

fn detect_ext(prepared_root: &Path) -> Result<String> {
    let dir = prepared_root.join("corrupted");
    let entries = fs::read_dir(&dir).map_err(|e| Error::io(dir.display().to_string(), e))?;
    for entry in entries.flatten() {
        if let Some(ext) = entry.path().extension() {
            let ext = ext.to_string_lossy().to_ascii_lowercase();
            if ext == "png" || ext == "ppm" {
                return Ok(ext);
            }
        }
    }
    Err(Error::Data(format!("{}: no images found", dir.display())))
}
