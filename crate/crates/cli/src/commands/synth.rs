use std::fs;
use std::path::Path;

use murk_core::data::corrupt::{CorruptionKind, RainParams, UnderwaterParams};
use murk_core::data::synthgen::synthetic_photo;
use murk_core::data::{io, Image};
use murk_core::rng::derive_seed;
use murk_core::{Error, Result};

use crate::args::SynthArgs;
use crate::cfgfile::{write_snapshot, ConfigFile};

pub fn run(args: &SynthArgs, cfg: &ConfigFile, seed: u64, quiet: bool) -> Result<()> {
    let n = cfg.resolve(args.n, "n", 10)?;
    let size_raw: String = cfg.resolve(args.size.clone(), "size", "48x48".into())?;
    let (w, h) = parse_size(&size_raw)?;
    let ext: String = cfg.resolve(args.ext.clone(), "ext", "png".into())?;

    let kind = match args.kind.as_str() {
        "noise" => CorruptionKind::Noise { sigma: cfg.resolve(args.sigma, "sigma", 30.0)? },
        "rain" => CorruptionKind::Rain(RainParams {
            density: cfg.resolve(args.density, "density", RainParams::default().density)?,
            ..RainParams::default()
        }),
        "downscale" => CorruptionKind::Downscale { factor: cfg.resolve(args.factor, "factor", 2)? },
        "underwater" => CorruptionKind::Underwater(UnderwaterParams {
            cast_strength: cfg.resolve(args.cast, "cast", UnderwaterParams::default().cast_strength)?,
            blur_radius: cfg.resolve(args.blur, "blur", UnderwaterParams::default().blur_radius)?,
            noise_sigma: cfg.resolve(args.noise_sigma, "noise_sigma", UnderwaterParams::default().noise_sigma)?,
        }),
        other => {
            return Err(Error::Config(format!(
                "--kind must be underwater|noise|rain|downscale, got '{other}'"
            )))
        }
    };

    let cleans: Vec<(String, Image)> = match &args.src {
        Some(dir) => load_cleans(dir, n)?,
        None => (0..n)
            .map(|i| {
                let id = format!("synth{i:04}");
                let img = synthetic_photo(w, h, derive_seed(seed, &["clean", &id]));
                (id, img)
            })
            .collect(),
    };

    for sub in ["corrupted", "clean"] {
        fs::create_dir_all(args.out.join(sub)).map_err(|e| Error::io(args.out.display().to_string(), e))?;
    }
    for (id, clean) in &cleans {
        let corrupted = kind.apply(clean, derive_seed(seed, &[kind.name(), id]))?;
        io::save_image(&args.out.join("clean").join(format!("{id}.{ext}")), clean)?;
        io::save_image(&args.out.join("corrupted").join(format!("{id}.{ext}")), &corrupted)?;
        if !quiet {
            eprintln!("wrote pair {id}");
        }
    }
    write_snapshot(
        &args.out,
        "synth",
        &[
            ("ext", ext),
            ("kind", args.kind.clone()),
            ("n", cleans.len().to_string()),
            ("seed", seed.to_string()),
            ("size", size_raw),
            ("src", args.src.as_ref().map(|p| p.display().to_string()).unwrap_or_default()),
        ],
    )?;
    println!("pairs={}", cleans.len());
    Ok(())
}

fn parse_size(raw: &str) -> Result<(usize, usize)> {
    let (w, h) = raw
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::Config(format!("--size must look like 48x48, got '{raw}'")))?;
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Config(format!("bad size component '{s}'")))
    };
    Ok((parse(w)?, parse(h)?))
}

fn load_cleans(dir: &Path, n: usize) -> Result<Vec<(String, Image)>> {
    let mut paths: Vec<_> = fs::read_dir(dir)
        .map_err(|e| Error::io(dir.display().to_string(), e))?
        .flatten()
        .map(|e| e.path())
        .filter(|p| {
            p.extension()
                .map(|e| {
                    let e = e.to_string_lossy().to_ascii_lowercase();
                    e == "png" || e == "ppm"
                })
                .unwrap_or(false)
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::Data(format!("{}: no png/ppm images found", dir.display())));
    }
    paths
        .into_iter()
        .take(n)
        .map(|p| {
            let id = p.file_stem().unwrap().to_string_lossy().into_owned();
            Ok((id, io::load_image(&p)?))
        })
        .collect()
}
