mod adam;
mod run;

pub use adam::{adam_step_slice, AdamHyper, AdamState};
pub use run::{finetune, multitask_loss, train, TaskDataset};

use crate::model::TaskId;

/// Optimization hyperparameters and loop controls.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_eps: f64,
    pub seed: u64,
    /// Log every n-th step (1 = every step).
    pub log_every: usize,
    /// Global-norm gradient clipping; off by default.
    pub grad_clip: Option<f64>,
    /// Stop once the latest total loss drops below this fraction of the
    /// first step's total loss. Off by default.
    pub early_stop_ratio: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 6,
            batch_size: 1,
            learning_rate: 1e-4,
            adam_beta1: 0.9,
            adam_beta2: 0.999,
            adam_eps: 1e-8,
            seed: 0,
            log_every: 1,
            grad_clip: None,
            early_stop_ratio: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.batch_size == 0 {
            return Err(crate::Error::Config("batch_size must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return Err(crate::Error::Config("adam betas must be in [0,1)".into()));
        }
        if self.log_every == 0 {
            return Err(crate::Error::Config("log_every must be >= 1".into()));
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamHyper {
        AdamHyper {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            eps: self.adam_eps,
        }
    }
}

/// One per-step, per-task record.
#[derive(Debug, Clone)]
pub struct TrainLogRow {
    pub step: u64,
    pub epoch: usize,
    pub task: TaskId,
    pub loss: f64,
    pub elapsed_ms: f64,
}

/// Append-only training trace with per-epoch wall-clock totals.
#[derive(Debug, Clone, Default)]
pub struct TrainLog {
    pub rows: Vec<TrainLogRow>,
    pub epoch_wall_ms: Vec<f64>,
}

impl TrainLog {
    /// CSV rows: `step,epoch,task,loss,elapsed_ms`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("step,epoch,task,loss,elapsed_ms\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{:.6},{:.3}\n",
                r.step, r.epoch, r.task, r.loss, r.elapsed_ms
            ));
        }
        out
    }

    /// Total loss (summed over tasks) per step, in step order.
    pub fn total_loss_per_step(&self) -> Vec<(u64, f64)> {
        let mut out: Vec<(u64, f64)> = Vec::new();
        for r in &self.rows {
            match out.last_mut() {
                Some((step, loss)) if *step == r.step => *loss += r.loss,
                _ => out.push((r.step, r.loss)),
            }
        }
        out
    }
}
