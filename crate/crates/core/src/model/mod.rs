pub mod checkpoint;
pub mod verify;
mod forward;
mod params;

pub use forward::{
    crop_from_patch, decoder_forward, encoder_forward, flatten_patches, forward, harvest_grads,
    head_forward, pad_to_patch, stage, tail_forward, unflatten_patches, PatchSequence,
    StagedModel,
};
pub use params::{group_of, param_specs, ParamSet};

use std::fmt;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Restoration task selecting a head, a tail, and a task embedding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TaskId {
    DenoiseSigma30,
    Derain,
    Upscale2x,
    Upscale4x,
    Underwater,
}

impl TaskId {
    pub const ALL: [TaskId; 5] = [
        TaskId::DenoiseSigma30,
        TaskId::Derain,
        TaskId::Upscale2x,
        TaskId::Upscale4x,
        TaskId::Underwater,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            TaskId::DenoiseSigma30 => "denoise30",
            TaskId::Derain => "derain",
            TaskId::Upscale2x => "up2",
            TaskId::Upscale4x => "up4",
            TaskId::Underwater => "underwater",
        }
    }

    pub fn parse(s: &str) -> Result<TaskId> {
        TaskId::ALL
            .iter()
            .copied()
            .find(|t| t.name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown task '{s}' (expected one of denoise30, derain, up2, up4, underwater)"
                ))
            })
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which head / tail / embedding a task actually uses after routing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TaskRoute {
    pub head: TaskId,
    pub tail: TaskId,
    pub embedding: TaskId,
}

/// Architecture hyperparameters. The shape of the network follows the
/// head/encoder/decoder/tail layout; all numeric values here are desk
/// defaults small enough to train on a CPU in minutes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelConfig {
    pub feature_channels: usize,
    pub patch_size: usize,
    pub encoder_layers: usize,
    pub decoder_layers: usize,
    pub attn_heads: usize,
    pub ffn_multiplier: usize,
    /// Capacity of the learned positional table, in tokens.
    pub max_patches: usize,
    pub tasks: Vec<TaskId>,
    /// Give the underwater task its own embedding even while it borrows
    /// the denoising head and tail.
    pub underwater_own_embedding: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            feature_channels: 32,
            patch_size: 4,
            encoder_layers: 2,
            decoder_layers: 2,
            attn_heads: 4,
            ffn_multiplier: 4,
            max_patches: 576,
            tasks: vec![TaskId::DenoiseSigma30],
            underwater_own_embedding: false,
        }
    }
}

impl ModelConfig {
    /// Token width E = C·P².
    pub fn embed_dim(&self) -> usize {
        self.feature_channels * self.patch_size * self.patch_size
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_channels == 0
            || self.patch_size == 0
            || self.attn_heads == 0
            || self.ffn_multiplier == 0
            || self.max_patches == 0
        {
            return Err(Error::Config("model extents must all be >= 1".into()));
        }
        if !self.embed_dim().is_multiple_of(self.attn_heads) {
            return Err(Error::Config(format!(
                "embed dim {} not divisible by {} heads",
                self.embed_dim(),
                self.attn_heads
            )));
        }
        if self.tasks.is_empty() {
            return Err(Error::Config("at least one task must be configured".into()));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if self.tasks[..i].contains(t) {
                return Err(Error::Config(format!("task {t} configured twice")));
            }
        }
        Ok(())
    }

    /// Tasks that own an embedding vector: every configured task, plus
    /// underwater when it gets a fresh embedding while borrowing the
    /// denoising head/tail.
    pub fn embedding_tasks(&self) -> Vec<TaskId> {
        let mut tasks = self.tasks.clone();
        if self.underwater_own_embedding && !tasks.contains(&TaskId::Underwater) {
            tasks.push(TaskId::Underwater);
        }
        tasks
    }

    /// Resolve which parameters serve `task`. Underwater routes through
    /// the denoising head/tail when it is not configured as its own task.
    pub fn route(&self, task: TaskId) -> Result<TaskRoute> {
        if self.tasks.contains(&task) {
            return Ok(TaskRoute { head: task, tail: task, embedding: task });
        }
        if task == TaskId::Underwater {
            if !self.tasks.contains(&TaskId::DenoiseSigma30) {
                return Err(Error::Config(
                    "underwater task routes through denoise30, which is not configured".into(),
                ));
            }
            let embedding = if self.underwater_own_embedding {
                TaskId::Underwater
            } else {
                TaskId::DenoiseSigma30
            };
            return Ok(TaskRoute {
                head: TaskId::DenoiseSigma30,
                tail: TaskId::DenoiseSigma30,
                embedding,
            });
        }
        Err(Error::Config(format!("task {task} is not configured on this model")))
    }
}

/// The full network: configuration plus every learnable tensor.
#[derive(Debug, Clone)]
pub struct IptModel {
    config: ModelConfig,
    params: ParamSet,
}

impl IptModel {
    pub fn new(config: ModelConfig, seed: u64) -> Result<IptModel> {
        config.validate()?;
        let params = params::init_params(&config, seed)?;
        Ok(IptModel { config, params })
    }

    pub(crate) fn from_parts(config: ModelConfig, params: ParamSet) -> IptModel {
        IptModel { config, params }
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamSet {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn param(&self, name: &str) -> Option<&Tensor<f32>> {
        self.params.get(name)
    }
}

/// Pairwise-interaction count of global attention over `n_pixels` pixels:
/// doubling the side length quadruples the pixels and grows this 16-fold
/// (100²→(100²)²=100e6; 200²→(200²)²=1600e6).
pub fn attention_cost(n_pixels: u64) -> u64 {
    n_pixels * n_pixels
}
