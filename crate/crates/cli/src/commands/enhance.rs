use std::fs;
use std::path::PathBuf;
use std::time::Instant;

use murk_core::data::io;
use murk_core::dcp::{DcpEnhancer, DcpParams};
use murk_core::metrics::{Enhancer, IdentityEnhancer, IptEnhancer};
use murk_core::model::checkpoint::load_checkpoint;
use murk_core::model::TaskId;
use murk_core::{Error, Result};

use crate::args::EnhanceArgs;
use crate::cfgfile::{write_snapshot, ConfigFile};

pub fn run(args: &EnhanceArgs, cfg: &ConfigFile, seed: u64, quiet: bool) -> Result<()> {
    let model = args.model.as_ref().map(|p| load_checkpoint(p)).transpose()?;
    let enhancer: Box<dyn Enhancer> = match (&model, args.method.as_deref()) {
        (Some(m), None) => {
            let task = match &args.task {
                Some(t) => TaskId::parse(t)?,
                None => m.config().tasks[0],
            };
            m.config().route(task)?;
            Box::new(IptEnhancer { model: m, task })
        }
        (None, Some("dcp")) => Box::new(DcpEnhancer {
            params: DcpParams {
                patch_radius: cfg.resolve(args.radius, "radius", DcpParams::default().patch_radius)?,
                omega: cfg.resolve(args.omega, "omega", DcpParams::default().omega)?,
                t0: cfg.resolve(args.t0, "t0", DcpParams::default().t0)?,
                ..DcpParams::default()
            },
        }),
        (None, Some("identity")) => Box::new(IdentityEnhancer),
        (None, Some(other)) => {
            return Err(Error::Config(format!("--method must be dcp|identity, got '{other}'")))
        }
        (None, None) => return Err(Error::Config("provide --model or --method".into())),
        (Some(_), Some(_)) => unreachable!("clap conflicts_with"),
    };

    let inputs = collect_inputs(&args.input)?;
    fs::create_dir_all(&args.out).map_err(|e| Error::io(args.out.display().to_string(), e))?;

    // Independent per-image work; results come back in input order so
    // the printed report is stable under any pool size.
    let process = |path: &PathBuf| -> Result<Option<(String, f64)>> {
        let img = match io::load_image(path) {
            Ok(img) => img,
            Err(e) if !args.strict => {
                eprintln!("warning: skipping {}: {e}", path.display());
                return Ok(None);
            }
            Err(e) => return Err(e),
        };
        let started = Instant::now();
        let restored = enhancer.enhance(&img)?;
        let ms = started.elapsed().as_secs_f64() * 1e3;
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        io::save_image(&args.out.join(&name), &restored)?;
        Ok(Some((name, ms)))
    };
    let results: Vec<Option<(String, f64)>> = {
        use rayon::prelude::*;
        if rayon::current_num_threads() > 1 && inputs.len() > 1 {
            inputs.par_iter().map(process).collect::<Result<_>>()?
        } else {
            inputs.iter().map(process).collect::<Result<_>>()?
        }
    };
    let done: Vec<(String, f64)> = results.into_iter().flatten().collect();
    if done.is_empty() {
        return Err(Error::Data(format!("{}: no readable images", args.input.display())));
    }
    for (name, ms) in &done {
        if args.time {
            println!("{name} {ms:.1} ms");
        } else if !quiet {
            eprintln!("enhanced {name}");
        }
    }
    if args.time {
        let mean = done.iter().map(|(_, ms)| ms).sum::<f64>() / done.len() as f64;
        println!("mean {mean:.1} ms over {} image(s)", done.len());
    }
    write_snapshot(
        &args.out,
        "enhance",
        &[
            ("input", args.input.display().to_string()),
            ("method", enhancer.name()),
            ("seed", seed.to_string()),
            ("strict", args.strict.to_string()),
        ],
    )?;
    Ok(())
}

fn collect_inputs(input: &PathBuf) -> Result<Vec<PathBuf>> {
    if input.is_file() {
        return Ok(vec![input.clone()]);
    }
    let mut files: Vec<PathBuf> = fs::read_dir(input)
        .map_err(|e| Error::io(input.display().to_string(), e))?
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
    files.sort();
    if files.is_empty() {
        return Err(Error::Data(format!("{}: no png/ppm inputs", input.display())));
    }
    Ok(files)
}
