use std::collections::HashMap;

use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{ModelConfig, TaskId};
use crate::rng::{rng_from_seed, Rng};
use crate::tensor::Tensor;

/// Ordered, name-addressed parameter store. Iteration order is the
/// construction order, which fixes checkpoint layout, gradient harvest
/// order, and optimizer state alignment.
#[derive(Debug, Clone)]
pub struct ParamSet {
    entries: Vec<(String, Tensor<f32>)>,
    index: HashMap<String, usize>,
}

impl ParamSet {
    pub fn new() -> Self {
        ParamSet {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<f32>) {
        let name = name.into();
        debug_assert!(!self.index.contains_key(&name), "duplicate parameter {name}");
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<f32>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<f32>> {
        self.index.get(name).copied().map(|i| &mut self.entries[i].1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<f32>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<f32>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn total_scalars(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    pub fn to_named_tensors(&self) -> Vec<(String, Tensor<f32>)> {
        self.entries.clone()
    }
}

impl Default for ParamSet {
    fn default() -> Self {
        Self::new()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InitKind {
    /// Kaiming fan-in scaling for convolution weights.
    ConvWeight,
    /// Truncated normal, std 0.02, for linear weights and embeddings.
    TruncNormal,
    Zero,
    One,
}

/// Every parameter the architecture owns for `cfg`, in fixed order.
/// Shared by initialization and by the checkpoint loader (which validates
/// names and shapes against this list).
pub fn param_specs(cfg: &ModelConfig) -> Vec<(String, Vec<usize>, &'static str)> {
    let c = cfg.feature_channels;
    let e = cfg.embed_dim();
    let f = e * cfg.ffn_multiplier;
    let mut specs: Vec<(String, Vec<usize>, &'static str)> = Vec::new();

    let conv = |specs: &mut Vec<(String, Vec<usize>, &'static str)>, prefix: String, co: usize, ci: usize| {
        specs.push((format!("{prefix}.weight"), vec![co, ci, 3, 3], "conv_w"));
        specs.push((format!("{prefix}.bias"), vec![co], "zero"));
    };
    let linear = |specs: &mut Vec<(String, Vec<usize>, &'static str)>, prefix: String, fan_in: usize, fan_out: usize| {
        specs.push((format!("{prefix}.weight"), vec![fan_in, fan_out], "trunc"));
        specs.push((format!("{prefix}.bias"), vec![fan_out], "zero"));
    };
    let norm = |specs: &mut Vec<(String, Vec<usize>, &'static str)>, prefix: String, d: usize| {
        specs.push((format!("{prefix}.gain"), vec![d], "one"));
        specs.push((format!("{prefix}.shift"), vec![d], "zero"));
    };
    let attn = |specs: &mut Vec<(String, Vec<usize>, &'static str)>, prefix: String, d: usize| {
        for part in ["wq", "wk", "wv", "wo"] {
            specs.push((format!("{prefix}.{part}"), vec![d, d], "trunc"));
        }
        for part in ["bq", "bk", "bv", "bo"] {
            specs.push((format!("{prefix}.{part}"), vec![d], "zero"));
        }
    };

    for t in &cfg.tasks {
        let p = format!("head.{t}");
        conv(&mut specs, format!("{p}.conv0"), c, 3);
        conv(&mut specs, format!("{p}.conv1"), c, c);
        conv(&mut specs, format!("{p}.conv2"), c, c);
    }

    specs.push(("pos_embed".into(), vec![cfg.max_patches, e], "trunc"));
    for t in cfg.embedding_tasks() {
        specs.push((format!("task_embed.{t}"), vec![e], "trunc"));
    }

    for i in 0..cfg.encoder_layers {
        let p = format!("enc.{i}");
        norm(&mut specs, format!("{p}.ln1"), e);
        attn(&mut specs, format!("{p}.attn"), e);
        norm(&mut specs, format!("{p}.ln2"), e);
        linear(&mut specs, format!("{p}.ffn.fc1"), e, f);
        linear(&mut specs, format!("{p}.ffn.fc2"), f, e);
    }
    for i in 0..cfg.decoder_layers {
        let p = format!("dec.{i}");
        norm(&mut specs, format!("{p}.ln1"), e);
        attn(&mut specs, format!("{p}.self_attn"), e);
        norm(&mut specs, format!("{p}.ln2"), e);
        attn(&mut specs, format!("{p}.cross_attn"), e);
        norm(&mut specs, format!("{p}.ln3"), e);
        linear(&mut specs, format!("{p}.ffn.fc1"), e, f);
        linear(&mut specs, format!("{p}.ffn.fc2"), f, e);
    }

    for t in &cfg.tasks {
        let p = format!("tail.{t}");
        match t.scale() {
            1 => {
                conv(&mut specs, format!("{p}.conv0"), c, c);
                conv(&mut specs, format!("{p}.conv1"), c, c);
                conv(&mut specs, format!("{p}.conv2"), 3, c);
            }
            s => {
                conv(&mut specs, format!("{p}.pre"), c * s * s, c);
                conv(&mut specs, format!("{p}.post"), 3, c);
            }
        }
    }
    specs
}

/// Group label used by the gradient checker and diagnostics.
pub fn group_of(name: &str) -> String {
    let first = name.split('.').next().unwrap_or(name);
    match first {
        "head" | "tail" | "pos_embed" | "task_embed" => first.to_string(),
        "enc" | "dec" => {
            let kind = name.split('.').nth(2).unwrap_or("?");
            let kind = match kind {
                "ln1" | "ln2" | "ln3" => "norm",
                other => other,
            };
            format!("{first}.{kind}")
        }
        _ => "other".to_string(),
    }
}

pub(crate) fn init_params(cfg: &ModelConfig, seed: u64) -> Result<ParamSet> {
    let mut rng = rng_from_seed(seed);
    let mut params = ParamSet::new();
    for (name, shape, kind) in param_specs(cfg) {
        let kind = match kind {
            "conv_w" => InitKind::ConvWeight,
            "trunc" => InitKind::TruncNormal,
            "one" => InitKind::One,
            "zero" => InitKind::Zero,
            other => return Err(Error::Config(format!("unknown init kind {other}"))),
        };
        let numel: usize = shape.iter().product();
        let data = match kind {
            InitKind::Zero => vec![0.0; numel],
            InitKind::One => vec![1.0; numel],
            InitKind::TruncNormal => (0..numel).map(|_| trunc_normal(&mut rng, 0.02)).collect(),
            InitKind::ConvWeight => {
                // fan_in = c_in * k * k
                let fan_in: usize = shape[1] * shape[2] * shape[3];
                let std = (2.0 / fan_in as f64).sqrt();
                (0..numel).map(|_| normal(&mut rng, std)).collect()
            }
        };
        params.insert(name, Tensor::new(shape, data)?);
    }
    Ok(params)
}

fn normal(rng: &mut Rng, std: f64) -> f32 {
    let dist = Normal::new(0.0f64, std).expect("positive std");
    dist.sample(rng) as f32
}

/// Normal(0, std) resampled until within two standard deviations.
fn trunc_normal(rng: &mut Rng, std: f64) -> f32 {
    let dist = Normal::new(0.0f64, 1.0).expect("unit normal");
    loop {
        let z: f64 = dist.sample(rng);
        if z.abs() <= 2.0 {
            return (z * std) as f32;
        }
    }
}

impl TaskId {
    /// Output side length per input side length.
    pub fn scale(&self) -> usize {
        match self {
            TaskId::Upscale2x => 2,
            TaskId::Upscale4x => 4,
            _ => 1,
        }
    }
}
