use murk_core::data::augment::SmoothKind;
use murk_core::data::manifest::{prepare_dataset, PrepareConfig, SmoothTarget};
use murk_core::{Error, Result};

use crate::args::PrepareArgs;
use crate::cfgfile::{write_snapshot, ConfigFile};

pub fn run(args: &PrepareArgs, cfg: &ConfigFile, seed: u64, quiet: bool) -> Result<()> {
    let smooth_raw: String = cfg.resolve(args.smooth.clone(), "smooth", "clean".into())?;
    let smooth = match smooth_raw.as_str() {
        "clean" => SmoothTarget::CleanOnly,
        "both" => SmoothTarget::Both,
        "none" => SmoothTarget::None,
        other => return Err(Error::Config(format!("--smooth must be clean|both|none, got '{other}'"))),
    };
    let kind_raw: String = cfg.resolve(args.smooth_kind.clone(), "smooth_kind", "box".into())?;
    let smooth_kind = match kind_raw.as_str() {
        "box" => SmoothKind::Box3,
        "gaussian" => SmoothKind::Gaussian3,
        other => return Err(Error::Config(format!("--smooth-kind must be box|gaussian, got '{other}'"))),
    };
    let train_fraction = cfg.resolve(args.train_frac, "train_frac", 0.8)?;
    let ext: String = cfg.resolve(args.ext.clone(), "ext", "png".into())?;

    let prep = PrepareConfig {
        smooth,
        smooth_kind,
        train_fraction,
        seed,
        ext: ext.clone(),
    };
    if !quiet {
        eprintln!("preparing {} -> {}", args.data.display(), args.out.display());
    }
    let summary = prepare_dataset(&args.data, &args.out, &prep)?;
    write_snapshot(
        &args.out,
        "prepare",
        &[
            ("data", args.data.display().to_string()),
            ("ext", ext),
            ("seed", seed.to_string()),
            ("smooth", smooth_raw),
            ("smooth_kind", kind_raw),
            ("train_frac", train_fraction.to_string()),
        ],
    )?;
    println!("train={} test={}", summary.train_pairs, summary.test_pairs);
    Ok(())
}
