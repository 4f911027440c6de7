use std::fs;

use murk_core::data::manifest::{load_manifest, load_pairs};
use murk_core::dcp::{DcpEnhancer, DcpParams};
use murk_core::metrics::{evaluate, render_csv, render_table, Enhancer, IdentityEnhancer, IptEnhancer, MetricReport};
use murk_core::model::checkpoint::load_checkpoint;
use murk_core::model::TaskId;
use murk_core::{Error, Result};

use crate::args::EvalArgs;
use crate::cfgfile::{write_snapshot, ConfigFile};

pub fn run(args: &EvalArgs, _cfg: &ConfigFile, seed: u64, quiet: bool) -> Result<()> {
    let manifest = load_manifest(&args.manifest)?;
    if manifest.test.is_empty() {
        return Err(Error::Data(format!("{}: empty test split", args.manifest.display())));
    }
    let root = args
        .manifest
        .parent()
        .ok_or_else(|| Error::Data(format!("{}: no parent directory", args.manifest.display())))?;
    let pairs = load_pairs(root, &manifest.test)?;
    if !quiet {
        eprintln!("evaluating on {} test pairs", pairs.len());
    }

    let model = args.model.as_ref().map(|p| load_checkpoint(p)).transpose()?;
    let mut enhancers: Vec<Box<dyn Enhancer>> = Vec::new();
    if args.with_identity {
        enhancers.push(Box::new(IdentityEnhancer));
    }
    if let Some(b) = &args.baseline {
        if b != "dcp" {
            return Err(Error::Config(format!("--baseline must be dcp, got '{b}'")));
        }
        enhancers.push(Box::new(DcpEnhancer { params: DcpParams::default() }));
    }
    if let Some(m) = &model {
        let task = match &args.task {
            Some(t) => TaskId::parse(t)?,
            None => m.config().tasks[0],
        };
        m.config().route(task)?;
        enhancers.push(Box::new(IptEnhancer { model: m, task }));
    }
    if enhancers.is_empty() {
        return Err(Error::Config(
            "nothing to evaluate: pass --model, --baseline dcp, and/or --with-identity".into(),
        ));
    }

    let reports: Vec<MetricReport> = enhancers
        .iter()
        .map(|e| evaluate(e.as_ref(), &pairs))
        .collect::<Result<_>>()?;

    fs::write(&args.report, render_csv(&reports))
        .map_err(|e| Error::io(args.report.display().to_string(), e))?;
    print!("{}", render_table(&reports));

    if let Some(dir) = args.report.parent() {
        if !dir.as_os_str().is_empty() {
            write_snapshot(
                dir,
                "eval",
                &[
                    ("manifest", args.manifest.display().to_string()),
                    ("methods", reports.iter().map(|r| r.method.clone()).collect::<Vec<_>>().join(",")),
                    ("seed", seed.to_string()),
                ],
            )?;
        }
    }
    Ok(())
}
