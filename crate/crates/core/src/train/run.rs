use std::path::Path;
use std::time::Instant;

use rand::seq::SliceRandom;

use crate::data::ImagePair;
use crate::error::{Error, Result};
use crate::model::checkpoint::save_checkpoint;
use crate::model::{forward, stage, IptModel, ModelConfig, StagedModel, TaskId};
use crate::rng::derive_rng;
use crate::scalar::Scalar;
use crate::tensor::{Tape, Var};
use crate::train::{adam_step_slice, AdamState, TrainConfig, TrainLog, TrainLogRow};

/// One task's training source.
#[derive(Debug, Clone)]
pub struct TaskDataset {
    pub task: TaskId,
    pub pairs: Vec<ImagePair>,
}

/// Sum over tasks of the per-task mean L1 between the restored output and
/// the clean target. Returns the total plus each task's own term, so the
/// additivity of the objective is directly observable.
pub fn multitask_loss<E: Scalar>(
    tape: &mut Tape<E>,
    staged: &StagedModel<E>,
    cfg: &ModelConfig,
    batch: &[(TaskId, &[ImagePair])],
) -> Result<(Var, Vec<(TaskId, f64)>)> {
    if batch.is_empty() {
        return Err(Error::Contract("multitask loss needs at least one task".into()));
    }
    let mut per_task = Vec::with_capacity(batch.len());
    let mut total: Option<Var> = None;
    for (task, pairs) in batch {
        if pairs.is_empty() {
            return Err(Error::Contract(format!("task {task} has an empty batch")));
        }
        cfg.route(*task)?;
        let mut task_loss: Option<Var> = None;
        for pair in *pairs {
            let img = tape.leaf(pair.corrupted.to_tensor().cast::<E>());
            let target = tape.leaf(pair.clean.to_tensor().cast::<E>());
            let out = forward(tape, staged, cfg, img, *task).map_err(|e| {
                Error::Dim(format!("pair '{}' (task {task}): {e}", pair.base_id))
            })?;
            let l1 = tape.l1_loss(out, target)?;
            task_loss = Some(match task_loss {
                None => l1,
                Some(acc) => tape.add(acc, l1)?,
            });
        }
        let mut task_var = task_loss.expect("nonempty batch");
        if pairs.len() > 1 {
            task_var = tape.scale(task_var, 1.0 / pairs.len() as f64);
        }
        per_task.push((*task, tape.value(task_var).item().to_f64()));
        total = Some(match total {
            None => task_var,
            Some(acc) => tape.add(acc, task_var)?,
        });
    }
    Ok((total.expect("nonempty task list"), per_task))
}

/// Epoch/step loop: per-epoch seeded reshuffle per task, one optimizer
/// step per joint batch, per-epoch checkpoints, bitwise reproducible for
/// a fixed (seed, config, dataset).
pub fn train(
    model: &mut IptModel,
    datasets: &[TaskDataset],
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<TrainLog> {
    cfg.validate()?;
    if datasets.is_empty() || datasets.iter().any(|d| d.pairs.is_empty()) {
        return Err(Error::Contract("training needs at least one nonempty dataset".into()));
    }
    for d in datasets {
        model.config().route(d.task)?;
    }

    let mut log = TrainLog::default();
    let mut adam = AdamState::for_model(model);
    let hp = cfg.adam();
    let steps_per_epoch = datasets
        .iter()
        .map(|d| d.pairs.len().div_ceil(cfg.batch_size))
        .max()
        .unwrap();

    let mut step: u64 = 0;
    let mut first_total: Option<f64> = None;
    'epochs: for epoch in 0..cfg.epochs {
        let epoch_started = Instant::now();
        let orders: Vec<Vec<usize>> = datasets
            .iter()
            .map(|d| {
                let mut idx: Vec<usize> = (0..d.pairs.len()).collect();
                let mut rng = derive_rng(cfg.seed, &["epoch", &epoch.to_string(), d.task.name()]);
                idx.shuffle(&mut rng);
                idx
            })
            .collect();

        for step_in_epoch in 0..steps_per_epoch {
            let step_started = Instant::now();
            step += 1;

            let mut tape: Tape<f32> = Tape::new();
            let staged = stage(&mut tape, model, true);
            let batches: Vec<(TaskId, Vec<ImagePair>)> = datasets
                .iter()
                .zip(&orders)
                .map(|(d, order)| {
                    let pairs: Vec<ImagePair> = (0..cfg.batch_size)
                        .map(|j| {
                            let k = (step_in_epoch * cfg.batch_size + j) % d.pairs.len();
                            d.pairs[order[k]].clone()
                        })
                        .collect();
                    (d.task, pairs)
                })
                .collect();
            let borrowed: Vec<(TaskId, &[ImagePair])> =
                batches.iter().map(|(t, p)| (*t, p.as_slice())).collect();

            let config = model.config().clone();
            let (total, per_task) = multitask_loss(&mut tape, &staged, &config, &borrowed)?;
            let total_value = tape.value(total).item() as f64;
            if !total_value.is_finite() {
                return Err(Error::Numeric(format!(
                    "loss became non-finite at step {step} (epoch {epoch})"
                )));
            }
            tape.backward(total)?;

            let mut grads = forward_grads(&tape, &staged, model);
            if let Some(max_norm) = cfg.grad_clip {
                clip_global_norm(&mut grads, max_norm);
            }

            adam.t += 1;
            for (i, (_, param)) in model.params_mut().iter_mut().enumerate() {
                if let Some(g) = &grads[i] {
                    adam_step_slice(param.data_mut(), g, &mut adam.m[i], &mut adam.v[i], adam.t, &hp)?;
                }
            }

            let elapsed_ms = step_started.elapsed().as_secs_f64() * 1e3;
            if (step - 1).is_multiple_of(cfg.log_every as u64) {
                for (task, loss) in &per_task {
                    log.rows.push(TrainLogRow {
                        step,
                        epoch,
                        task: *task,
                        loss: *loss,
                        elapsed_ms,
                    });
                }
            }

            let first = *first_total.get_or_insert(total_value);
            if let Some(ratio) = cfg.early_stop_ratio {
                if total_value < ratio * first {
                    log.epoch_wall_ms.push(epoch_started.elapsed().as_secs_f64() * 1e3);
                    if let Some(dir) = checkpoint_dir {
                        save_checkpoint(&dir.join(format!("ckpt-epoch-{epoch:03}.ckpt")), model)?;
                    }
                    break 'epochs;
                }
            }
        }

        log.epoch_wall_ms.push(epoch_started.elapsed().as_secs_f64() * 1e3);
        if let Some(dir) = checkpoint_dir {
            save_checkpoint(&dir.join(format!("ckpt-epoch-{epoch:03}.ckpt")), model)?;
        }
    }
    Ok(log)
}

fn forward_grads(
    tape: &Tape<f32>,
    staged: &StagedModel<f32>,
    model: &IptModel,
) -> Vec<Option<Vec<f32>>> {
    model
        .params()
        .iter()
        .map(|(name, _)| tape.grad(staged.var(name)).map(|g| g.to_vec()))
        .collect()
}

fn clip_global_norm(grads: &mut [Option<Vec<f32>>], max_norm: f64) {
    let mut sq = 0.0f64;
    for g in grads.iter().flatten() {
        for &v in g {
            sq += f64::from(v) * f64::from(v);
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = (max_norm / norm) as f32;
        for g in grads.iter_mut().flatten() {
            for v in g.iter_mut() {
                *v *= scale;
            }
        }
    }
}

/// Load a checkpoint and continue training on (typically underwater)
/// pairs routed through the task given. The loop semantics are identical
/// to [`train`].
pub fn finetune(
    checkpoint: &Path,
    pairs: Vec<ImagePair>,
    task: TaskId,
    cfg: &TrainConfig,
    checkpoint_dir: Option<&Path>,
) -> Result<(IptModel, TrainLog)> {
    let mut model = crate::model::checkpoint::load_checkpoint(checkpoint)?;
    let log = train(&mut model, &[TaskDataset { task, pairs }], cfg, checkpoint_dir)?;
    Ok((model, log))
}
