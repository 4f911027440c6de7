use murk_core::model::verify::check_model_gradients;
use murk_core::model::{IptModel, ModelConfig, TaskId};
use murk_core::tensor::gradcheck::{check_all_ops, fd_defaults, FdParams, GradcheckReport};
use murk_core::tensor::Sabotage;
use murk_core::{Error, Result};

use crate::args::GradcheckArgs;
use crate::cfgfile::ConfigFile;

pub fn run(args: &GradcheckArgs, cfg: &ConfigFile, seed: u64, quiet: bool) -> Result<()> {
    let size = cfg.resolve(args.size, "size", 8)?;
    let layers = cfg.resolve(args.layers, "layers", 1)?;
    let samples = cfg.resolve(args.samples, "samples", 5)?;
    let instances = cfg.resolve(args.instances, "instances", 20)?;
    let mode: String = cfg.resolve(args.mode.clone(), "mode", "both".into())?;
    let sabotage = if args.corrupt { Some(Sabotage::MatmulLhs) } else { None };

    let model_cfg = ModelConfig {
        encoder_layers: layers,
        decoder_layers: layers,
        tasks: vec![TaskId::DenoiseSigma30],
        ..ModelConfig::default()
    };
    let model = IptModel::new(model_cfg, seed)?;
    if !quiet {
        eprintln!(
            "gradcheck: {instances} instances/op, {samples} samples/group, {size}x{size} input, {layers}+{layers} layers"
        );
    }

    let mut reports: Vec<(String, GradcheckReport)> = Vec::new();
    if mode == "both" || mode == "f32" {
        reports.push((
            "ops/f32".into(),
            check_all_ops::<f32>(seed, instances, fd_defaults::<f32>(), sabotage)?,
        ));
        // End-to-end f32 analytic gradients against the f64-shadow
        // finite-difference oracle.
        let fd = FdParams { h: 1e-5, tol: 1e-3, floor: 1e-4 };
        reports.push((
            "model/f32".into(),
            check_model_gradients::<f32>(&model, size, samples, seed, fd, sabotage)?,
        ));
    }
    if mode == "both" || mode == "f64" {
        reports.push((
            "ops/f64".into(),
            check_all_ops::<f64>(seed, instances, fd_defaults::<f64>(), sabotage)?,
        ));
        let fd = FdParams { h: 1e-5, tol: 1e-5, floor: 1e-10 };
        reports.push((
            "model/f64".into(),
            check_model_gradients::<f64>(&model, size, samples, seed, fd, sabotage)?,
        ));
    }
    if reports.is_empty() {
        return Err(Error::Config(format!("--mode must be both|f32|f64, got '{mode}'")));
    }

    let mut offenders = Vec::new();
    for (label, report) in &reports {
        for o in &report.outcomes {
            println!("{label} {:<24} worst_rel={:.3e} tol={:.0e}", o.group, o.worst_rel, o.tol);
            if !o.pass() {
                offenders.push(format!("{label}/{} ({:.3e} >= {:.0e})", o.group, o.worst_rel, o.tol));
            }
        }
    }
    if offenders.is_empty() {
        println!("gradcheck: all groups within tolerance");
        Ok(())
    } else {
        Err(Error::Numeric(format!(
            "gradient check failed for: {}",
            offenders.join(", ")
        )))
    }
}
