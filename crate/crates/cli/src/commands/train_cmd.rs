use std::fs;
use std::path::{Path, PathBuf};

use murk_core::data::manifest::{load_manifest, load_pairs};
use murk_core::data::ImagePair;
use murk_core::model::checkpoint::{load_checkpoint, save_checkpoint};
use murk_core::model::{IptModel, ModelConfig, TaskId};
use murk_core::train::{train, TaskDataset, TrainConfig};
use murk_core::{Error, Result};

use crate::args::{FinetuneArgs, LoopArgs, ModelShapeArgs, TrainArgs};
use crate::cfgfile::{write_snapshot, ConfigFile};

fn loop_config(args: &LoopArgs, cfg: &ConfigFile, seed: u64, default_lr: f64) -> Result<TrainConfig> {
    Ok(TrainConfig {
        epochs: cfg.resolve(args.epochs, "epochs", 6)?,
        batch_size: cfg.resolve(args.batch, "batch", 1)?,
        learning_rate: cfg.resolve(args.lr, "lr", default_lr)?,
        log_every: cfg.resolve(args.log_every, "log_every", 1)?,
        grad_clip: match args.grad_clip {
            Some(v) => Some(v),
            None => cfg.get("grad_clip").map(|v| v.parse()).transpose().map_err(|_| {
                Error::Config("config key 'grad_clip' has an unparsable value".into())
            })?,
        },
        early_stop_ratio: args.early_stop_ratio,
        seed,
        ..TrainConfig::default()
    })
}

fn shape_config(shape: &ModelShapeArgs, cfg: &ConfigFile, tasks: Vec<TaskId>) -> Result<ModelConfig> {
    let d = ModelConfig::default();
    Ok(ModelConfig {
        feature_channels: cfg.resolve(shape.channels, "channels", d.feature_channels)?,
        patch_size: cfg.resolve(shape.patch, "patch", d.patch_size)?,
        encoder_layers: cfg.resolve(shape.enc_layers, "enc_layers", d.encoder_layers)?,
        decoder_layers: cfg.resolve(shape.dec_layers, "dec_layers", d.decoder_layers)?,
        attn_heads: cfg.resolve(shape.heads, "heads", d.attn_heads)?,
        ffn_multiplier: cfg.resolve(shape.ffn_mult, "ffn_mult", d.ffn_multiplier)?,
        max_patches: cfg.resolve(shape.max_patches, "max_patches", d.max_patches)?,
        tasks,
        underwater_own_embedding: shape.underwater_own_embedding
            || cfg.get("underwater_own_embedding") == Some("true"),
    })
}

fn load_train_pairs(manifest_path: &Path) -> Result<Vec<ImagePair>> {
    let manifest = load_manifest(manifest_path)?;
    let root = manifest_path
        .parent()
        .ok_or_else(|| Error::Data(format!("{}: no parent directory", manifest_path.display())))?;
    if manifest.train.is_empty() {
        return Err(Error::Data(format!("{}: empty train split", manifest_path.display())));
    }
    load_pairs(root, &manifest.train)
}

fn write_outputs(out: &Path, model: &IptModel, log: &murk_core::train::TrainLog) -> Result<()> {
    fs::create_dir_all(out).map_err(|e| Error::io(out.display().to_string(), e))?;
    save_checkpoint(&out.join("model.ckpt"), model)?;
    let loss_path = out.join("loss.csv");
    fs::write(&loss_path, log.to_csv()).map_err(|e| Error::io(loss_path.display().to_string(), e))
}

pub fn run_pretrain(args: &TrainArgs, cfg: &ConfigFile, seed: u64, quiet: bool) -> Result<()> {
    let main_task = TaskId::parse(&cfg.resolve(args.task.clone(), "task", "denoise30".into())?)?;
    let mut sources: Vec<(TaskId, PathBuf)> = vec![(main_task, args.manifest.clone())];
    for extra in &args.extra {
        let (task, manifest) = extra
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("--extra must be TASK=MANIFEST, got '{extra}'")))?;
        sources.push((TaskId::parse(task)?, PathBuf::from(manifest)));
    }

    // Underwater routes through denoise30 unless configured as its own
    // task; the model must own the routed-to head/tail.
    let mut tasks: Vec<TaskId> = Vec::new();
    for (t, _) in &sources {
        let owned = if *t == TaskId::Underwater { TaskId::DenoiseSigma30 } else { *t };
        if !tasks.contains(&owned) {
            tasks.push(owned);
        }
    }
    let model_cfg = shape_config(&args.shape, cfg, tasks)?;
    let train_cfg = loop_config(&args.hyper, cfg, seed, 1e-4)?;

    let mut datasets = Vec::new();
    for (task, manifest) in &sources {
        datasets.push(TaskDataset { task: *task, pairs: load_train_pairs(manifest)? });
    }
    if !quiet {
        let total: usize = datasets.iter().map(|d| d.pairs.len()).sum();
        eprintln!("pretraining on {} pairs across {} task(s)", total, datasets.len());
    }

    fs::create_dir_all(&args.out).map_err(|e| Error::io(args.out.display().to_string(), e))?;
    let mut model = IptModel::new(model_cfg, seed)?;
    let log = train(&mut model, &datasets, &train_cfg, Some(&args.out))?;
    write_outputs(&args.out, &model, &log)?;
    write_snapshot(&args.out, "pretrain", &snapshot_entries(&train_cfg, &sources, seed))?;
    println!(
        "steps={} final_loss={:.6}",
        log.rows.last().map(|r| r.step).unwrap_or(0),
        log.rows.last().map(|r| r.loss).unwrap_or(f64::NAN)
    );
    Ok(())
}

pub fn run_finetune(args: &FinetuneArgs, cfg: &ConfigFile, seed: u64, quiet: bool) -> Result<()> {
    let task = TaskId::parse(&cfg.resolve(args.task.clone(), "task", "underwater".into())?)?;
    let train_cfg = loop_config(&args.hyper, cfg, seed, 5e-5)?;
    let pairs = load_train_pairs(&args.manifest)?;
    if !quiet {
        eprintln!(
            "fine-tuning {} on {} pairs as task {task}",
            args.checkpoint.display(),
            pairs.len()
        );
    }
    fs::create_dir_all(&args.out).map_err(|e| Error::io(args.out.display().to_string(), e))?;
    let mut model = load_checkpoint(&args.checkpoint)?;
    let log = train(&mut model, &[TaskDataset { task, pairs }], &train_cfg, Some(&args.out))?;
    write_outputs(&args.out, &model, &log)?;
    let sources = vec![(task, args.manifest.clone())];
    let mut entries = snapshot_entries(&train_cfg, &sources, seed);
    entries.push(("checkpoint", args.checkpoint.display().to_string()));
    write_snapshot(&args.out, "finetune", &entries)?;
    println!(
        "steps={} final_loss={:.6}",
        log.rows.last().map(|r| r.step).unwrap_or(0),
        log.rows.last().map(|r| r.loss).unwrap_or(f64::NAN)
    );
    Ok(())
}

fn snapshot_entries<'a>(
    train_cfg: &TrainConfig,
    sources: &[(TaskId, PathBuf)],
    seed: u64,
) -> Vec<(&'a str, String)> {
    let tasks: Vec<String> = sources
        .iter()
        .map(|(t, m)| format!("{t}={}", m.display()))
        .collect();
    vec![
        ("batch", train_cfg.batch_size.to_string()),
        ("epochs", train_cfg.epochs.to_string()),
        ("grad_clip", train_cfg.grad_clip.map(|v| v.to_string()).unwrap_or_default()),
        ("log_every", train_cfg.log_every.to_string()),
        ("lr", train_cfg.learning_rate.to_string()),
        ("seed", seed.to_string()),
        ("tasks", tasks.join(",")),
    ]
}
