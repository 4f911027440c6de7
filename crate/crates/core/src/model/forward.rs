use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::model::{IptModel, ModelConfig, TaskId};
use crate::scalar::Scalar;
use crate::tensor::{PadMode, Tape, Tensor, Var};

/// Model parameters staged onto a tape as leaves, addressed by name.
pub struct StagedModel<E: Scalar> {
    vars: HashMap<String, Var>,
    _marker: std::marker::PhantomData<E>,
}

impl<E: Scalar> StagedModel<E> {
    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} not staged"))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.vars.keys().map(String::as_str)
    }
}

/// Copy every parameter onto `tape`. With `trainable` the leaves request
/// gradients, so a later `backward` fills them in.
pub fn stage<E: Scalar>(tape: &mut Tape<E>, model: &IptModel, trainable: bool) -> StagedModel<E> {
    let cast: Vec<(String, Tensor<E>)> = model
        .params()
        .iter()
        .map(|(n, t)| (n.to_string(), t.cast()))
        .collect();
    stage_named(tape, &cast, trainable)
}

/// Stage an explicit named parameter list (the gradient checker keeps its
/// own f64 copies so perturbations are not quantized through f32).
pub(crate) fn stage_named<E: Scalar>(
    tape: &mut Tape<E>,
    params: &[(String, Tensor<E>)],
    trainable: bool,
) -> StagedModel<E> {
    let mut vars = HashMap::new();
    for (name, tensor) in params {
        let mut staged = tensor.clone();
        staged.requires_grad = trainable;
        staged.grad = None;
        vars.insert(name.clone(), tape.leaf(staged));
    }
    StagedModel {
        vars,
        _marker: std::marker::PhantomData,
    }
}

/// Read back gradients for every parameter after `backward`, in the
/// model's canonical parameter order. A `None` entry means the parameter
/// was not reached from the loss (e.g. an unused task head).
pub fn harvest_grads<E: Scalar>(
    tape: &Tape<E>,
    staged: &StagedModel<E>,
    model: &IptModel,
) -> Vec<(String, Option<Vec<f32>>)> {
    model
        .params()
        .iter()
        .map(|(name, _)| {
            let g = tape
                .grad(staged.var(name))
                .map(|g| g.iter().map(|&v| v.to_f32()).collect());
            (name.to_string(), g)
        })
        .collect()
}

/// Reflect-pad an image/feature map on the right and bottom so both
/// spatial extents are multiples of `patch`. No-op when already aligned.
pub fn pad_to_patch<E: Scalar>(tape: &mut Tape<E>, x: Var, patch: usize) -> Result<Var> {
    let shape = tape.value(x).shape();
    let (h, w) = (shape[1], shape[2]);
    let (ph, pw) = (h.next_multiple_of(patch) - h, w.next_multiple_of(patch) - w);
    if ph == 0 && pw == 0 {
        return Ok(x);
    }
    tape.pad2d(x, 0, pw, 0, ph, PadMode::Reflect)
}

/// Crop back to the stated extents (inverse of [`pad_to_patch`] for the
/// top-left region).
pub fn crop_from_patch<E: Scalar>(tape: &mut Tape<E>, x: Var, height: usize, width: usize) -> Result<Var> {
    let shape = tape.value(x).shape();
    if shape[1] == height && shape[2] == width {
        return Ok(x);
    }
    tape.crop2d(x, height, width)
}

struct AttnVars {
    wq: Var,
    wk: Var,
    wv: Var,
    wo: Var,
    bq: Var,
    bk: Var,
    bv: Var,
    bo: Var,
}

fn attn_vars<E: Scalar>(staged: &StagedModel<E>, prefix: &str) -> AttnVars {
    AttnVars {
        wq: staged.var(&format!("{prefix}.wq")),
        wk: staged.var(&format!("{prefix}.wk")),
        wv: staged.var(&format!("{prefix}.wv")),
        wo: staged.var(&format!("{prefix}.wo")),
        bq: staged.var(&format!("{prefix}.bq")),
        bk: staged.var(&format!("{prefix}.bk")),
        bv: staged.var(&format!("{prefix}.bv")),
        bo: staged.var(&format!("{prefix}.bo")),
    }
}

fn linear<E: Scalar>(tape: &mut Tape<E>, x: Var, w: Var, b: Var) -> Result<Var> {
    let n = tape.value(x).shape()[0];
    let y = tape.matmul(x, w)?;
    let bias = tape.repeat_rows(b, n)?;
    tape.add(y, bias)
}

/// Multi-head scaled dot-product attention over full token sequences.
/// Score-matrix sizes are reported to the tape's attention counters.
fn multi_head_attention<E: Scalar>(
    tape: &mut Tape<E>,
    heads: usize,
    p: &AttnVars,
    q_in: Var,
    kv_in: Var,
) -> Result<Var> {
    let e = tape.value(q_in).shape()[1];
    let hd = e / heads;
    let q = linear(tape, q_in, p.wq, p.bq)?;
    let k = linear(tape, kv_in, p.wk, p.bk)?;
    let v = linear(tape, kv_in, p.wv, p.bv)?;

    let mut contexts = Vec::with_capacity(heads);
    for h in 0..heads {
        let qh = tape.slice_cols(q, h * hd, hd)?;
        let kh = tape.slice_cols(k, h * hd, hd)?;
        let vh = tape.slice_cols(v, h * hd, hd)?;
        let kt = tape.transpose2d(kh)?;
        let scores = tape.matmul(qh, kt)?;
        let scaled = tape.scale(scores, 1.0 / (hd as f64).sqrt());
        let probs = tape.softmax(scaled)?;
        tape.note_attention(probs);
        contexts.push(tape.matmul(probs, vh)?);
    }
    let merged = tape.concat_cols(&contexts)?;
    linear(tape, merged, p.wo, p.bo)
}

fn ffn<E: Scalar>(tape: &mut Tape<E>, staged: &StagedModel<E>, prefix: &str, x: Var) -> Result<Var> {
    let h = linear(
        tape,
        x,
        staged.var(&format!("{prefix}.fc1.weight")),
        staged.var(&format!("{prefix}.fc1.bias")),
    )?;
    let h = tape.gelu(h);
    linear(
        tape,
        h,
        staged.var(&format!("{prefix}.fc2.weight")),
        staged.var(&format!("{prefix}.fc2.bias")),
    )
}

fn norm<E: Scalar>(tape: &mut Tape<E>, staged: &StagedModel<E>, prefix: &str, x: Var) -> Result<Var> {
    tape.layernorm(
        x,
        staged.var(&format!("{prefix}.gain")),
        staged.var(&format!("{prefix}.shift")),
        1e-5,
    )
}

/// Three-conv head: 3 → C → C → C, ReLU after the first two.
pub fn head_forward<E: Scalar>(
    tape: &mut Tape<E>,
    staged: &StagedModel<E>,
    cfg: &ModelConfig,
    img: Var,
    task: TaskId,
) -> Result<Var> {
    let route = cfg.route(task)?;
    let p = format!("head.{}", route.head);
    let mut x = img;
    for (i, conv) in ["conv0", "conv1", "conv2"].iter().enumerate() {
        x = tape.conv2d(
            x,
            staged.var(&format!("{p}.{conv}.weight")),
            staged.var(&format!("{p}.{conv}.bias")),
            1,
            1,
            PadMode::Reflect,
        )?;
        if i < 2 {
            x = tape.relu(x);
        }
    }
    Ok(x)
}

/// A feature map flattened into patch tokens, remembering where it came
/// from so it can be restored exactly.
#[derive(Debug, Clone, Copy)]
pub struct PatchSequence {
    pub tokens: Var,
    /// Patch grid (rows, cols); token count is rows·cols.
    pub grid: (usize, usize),
    /// The [C,H,W] extents the sequence was cut from.
    pub origin_shape: (usize, usize, usize),
}

/// Cut a [C,H,W] feature map into non-overlapping P×P patches, each
/// raveled into one token of dimension C·P².
pub fn flatten_patches<E: Scalar>(tape: &mut Tape<E>, features: Var, patch: usize) -> Result<PatchSequence> {
    let shape = tape.value(features).shape().to_vec();
    let [c, h, w] = shape[..] else {
        return Err(Error::Dim(format!("flatten_patches needs [C,H,W], got {shape:?}")));
    };
    let tokens = tape.patch_flatten(features, patch)?;
    Ok(PatchSequence {
        tokens,
        grid: (h / patch, w / patch),
        origin_shape: (c, h, w),
    })
}

/// Exact inverse of [`flatten_patches`].
pub fn unflatten_patches<E: Scalar>(tape: &mut Tape<E>, seq: &PatchSequence) -> Result<Var> {
    let (c, h, w) = seq.origin_shape;
    let (rows, cols) = seq.grid;
    let patch = h / rows.max(1);
    debug_assert_eq!(rows * patch, h);
    debug_assert_eq!(cols * patch, w);
    tape.patch_unflatten(seq.tokens, c, rows, cols, patch)
}

/// Positional embedding plus `encoder_layers` pre-norm blocks of
/// self-attention and feed-forward, residual throughout.
pub fn encoder_forward<E: Scalar>(
    tape: &mut Tape<E>,
    staged: &StagedModel<E>,
    cfg: &ModelConfig,
    seq: &PatchSequence,
) -> Result<PatchSequence> {
    let n = tape.value(seq.tokens).shape()[0];
    if n > cfg.max_patches {
        return Err(Error::Capacity(format!(
            "{n} tokens exceed the positional table capacity of {}",
            cfg.max_patches
        )));
    }
    let pos = tape.slice_rows(staged.var("pos_embed"), 0, n)?;
    let mut x = tape.add(seq.tokens, pos)?;
    for i in 0..cfg.encoder_layers {
        let p = format!("enc.{i}");
        let a = norm(tape, staged, &format!("{p}.ln1"), x)?;
        let attn = multi_head_attention(tape, cfg.attn_heads, &attn_vars(staged, &format!("{p}.attn")), a, a)?;
        x = tape.add(x, attn)?;
        let f = norm(tape, staged, &format!("{p}.ln2"), x)?;
        let ff = ffn(tape, staged, &format!("{p}.ffn"), f)?;
        x = tape.add(x, ff)?;
    }
    Ok(PatchSequence { tokens: x, ..*seq })
}

/// Decoder blocks: task-conditioned self-attention, cross-attention over
/// the encoder output, then feed-forward. The task embedding is added to
/// the query tokens of every block.
pub fn decoder_forward<E: Scalar>(
    tape: &mut Tape<E>,
    staged: &StagedModel<E>,
    cfg: &ModelConfig,
    enc: &PatchSequence,
    task: TaskId,
) -> Result<PatchSequence> {
    let route = cfg.route(task)?;
    let memory = enc.tokens;
    let n = tape.value(memory).shape()[0];
    let emb = staged.var(&format!("task_embed.{}", route.embedding));
    let emb_rows = tape.repeat_rows(emb, n)?;

    let mut y = memory;
    for i in 0..cfg.decoder_layers {
        let p = format!("dec.{i}");
        let a = norm(tape, staged, &format!("{p}.ln1"), y)?;
        let q = tape.add(a, emb_rows)?;
        let self_attn =
            multi_head_attention(tape, cfg.attn_heads, &attn_vars(staged, &format!("{p}.self_attn")), q, a)?;
        y = tape.add(y, self_attn)?;

        let b = norm(tape, staged, &format!("{p}.ln2"), y)?;
        let q2 = tape.add(b, emb_rows)?;
        let cross =
            multi_head_attention(tape, cfg.attn_heads, &attn_vars(staged, &format!("{p}.cross_attn")), q2, memory)?;
        y = tape.add(y, cross)?;

        let c = norm(tape, staged, &format!("{p}.ln3"), y)?;
        let ff = ffn(tape, staged, &format!("{p}.ffn"), c)?;
        y = tape.add(y, ff)?;
    }
    Ok(PatchSequence { tokens: y, ..*enc })
}

/// Per-task tail. Restoration tails keep the resolution (C → C → C → 3);
/// upscale tails expand to C·s² channels, rearrange depth to space, and
/// project to RGB.
pub fn tail_forward<E: Scalar>(
    tape: &mut Tape<E>,
    staged: &StagedModel<E>,
    cfg: &ModelConfig,
    features: Var,
    task: TaskId,
) -> Result<Var> {
    let route = cfg.route(task)?;
    let p = format!("tail.{}", route.tail);
    match task.scale() {
        1 => {
            let mut x = features;
            for (i, conv) in ["conv0", "conv1", "conv2"].iter().enumerate() {
                x = tape.conv2d(
                    x,
                    staged.var(&format!("{p}.{conv}.weight")),
                    staged.var(&format!("{p}.{conv}.bias")),
                    1,
                    1,
                    PadMode::Reflect,
                )?;
                if i < 2 {
                    x = tape.relu(x);
                }
            }
            Ok(x)
        }
        s => {
            let pre = tape.conv2d(
                features,
                staged.var(&format!("{p}.pre.weight")),
                staged.var(&format!("{p}.pre.bias")),
                1,
                1,
                PadMode::Reflect,
            )?;
            let up = tape.depth_to_space(pre, s)?;
            let up = tape.relu(up);
            tape.conv2d(
                up,
                staged.var(&format!("{p}.post.weight")),
                staged.var(&format!("{p}.post.bias")),
                1,
                1,
                PadMode::Reflect,
            )
        }
    }
}

/// Full pass: pad → head → flatten → encoder → decoder(task) → unflatten
/// → tail → crop. Output extents are the task scale times the input
/// extents. Values are left unclamped so training gradients flow; see
/// [`IptModel::infer`] for the clamped inference path.
pub fn forward<E: Scalar>(
    tape: &mut Tape<E>,
    staged: &StagedModel<E>,
    cfg: &ModelConfig,
    img: Var,
    task: TaskId,
) -> Result<Var> {
    let shape = tape.value(img).shape().to_vec();
    if shape.len() != 3 || shape[0] != 3 {
        return Err(Error::Dim(format!("forward expects a [3,H,W] image, got {shape:?}")));
    }
    let (h, w) = (shape[1], shape[2]);
    let p = cfg.patch_size;

    let padded = pad_to_patch(tape, img, p)?;
    let feats = head_forward(tape, staged, cfg, padded, task)?;
    let seq = flatten_patches(tape, feats, p)?;
    let enc = encoder_forward(tape, staged, cfg, &seq)?;
    let dec = decoder_forward(tape, staged, cfg, &enc, task)?;
    let feats_out = unflatten_patches(tape, &dec)?;
    let out = tail_forward(tape, staged, cfg, feats_out, task)?;

    let s = task.scale();
    crop_from_patch(tape, out, h * s, w * s)
}

impl IptModel {
    /// Inference on a [3,H,W] tensor with values in [0,1]: runs the
    /// forward pass without gradients and clamps the output to [0,1].
    pub fn infer(&self, img: &Tensor<f32>, task: TaskId) -> Result<Tensor<f32>> {
        let mut tape: Tape<f32> = Tape::new();
        let staged = stage(&mut tape, self, false);
        let input = tape.leaf(img.clone());
        let out = forward(&mut tape, &staged, self.config(), input, task)?;
        let t = tape.value(out);
        let data = t.data().iter().map(|&v| v.clamp(0.0, 1.0)).collect();
        Tensor::new(t.shape().to_vec(), data)
    }

    /// Largest square window a single forward pass can take without
    /// exceeding the positional table, capped at 96 px to bound the
    /// quadratic attention cost.
    pub fn tile_side(&self) -> usize {
        let cfg = self.config();
        let tokens_per_side = (cfg.max_patches as f64).sqrt().floor() as usize;
        (cfg.patch_size * tokens_per_side.max(1)).min(96)
    }

    /// Inference over arbitrarily large images: the input is covered by
    /// overlapping tiles, each restored independently, and the results
    /// are blended with linear ramps across the overlaps. Images at or
    /// under the tile size take the direct path.
    pub fn infer_tiled(&self, img: &Tensor<f32>, task: TaskId) -> Result<Tensor<f32>> {
        let shape = img.shape().to_vec();
        let [_, h, w] = shape[..] else {
            return Err(Error::Dim(format!("infer expects [3,H,W], got {shape:?}")));
        };
        let tile = self.tile_side();
        if h <= tile && w <= tile {
            return self.infer(img, task);
        }
        let overlap = (tile / 6).max(8).min(tile / 2);
        let stride = tile - overlap;
        let s = task.scale();
        let (oh, ow) = (h * s, w * s);
        let mut acc = vec![0.0f64; 3 * oh * ow];
        let mut weight = vec![0.0f64; oh * ow];

        let starts = |extent: usize| -> Vec<usize> {
            if extent <= tile {
                return vec![0];
            }
            let mut v: Vec<usize> = (0..).map(|i| i * stride).take_while(|&p| p + tile < extent).collect();
            v.push(extent - tile);
            v
        };
        for &y0 in &starts(h) {
            for &x0 in &starts(w) {
                let th = tile.min(h - y0);
                let tw = tile.min(w - x0);
                let mut tile_data = vec![0.0f32; 3 * th * tw];
                for c in 0..3 {
                    for y in 0..th {
                        for x in 0..tw {
                            tile_data[c * th * tw + y * tw + x] =
                                img.data()[c * h * w + (y0 + y) * w + (x0 + x)];
                        }
                    }
                }
                let out = self.infer(&Tensor::new(vec![3, th, tw], tile_data)?, task)?;
                let (sth, stw) = (th * s, tw * s);
                // Linear ramp inside overlaps; full weight at image borders.
                let ramp = |i: usize, len: usize, at_start_edge: bool, at_end_edge: bool| -> f64 {
                    let fade = (overlap * s).max(1);
                    let mut v = 1.0f64;
                    if !at_start_edge && i < fade {
                        v = v.min((i + 1) as f64 / (fade + 1) as f64);
                    }
                    if !at_end_edge && i >= len - fade.min(len) {
                        v = v.min((len - i) as f64 / (fade + 1) as f64);
                    }
                    v
                };
                for y in 0..sth {
                    let wy = ramp(y, sth, y0 == 0, y0 + th == h);
                    for x in 0..stw {
                        let wx = ramp(x, stw, x0 == 0, x0 + tw == w);
                        let wgt = wy * wx;
                        let oy = y0 * s + y;
                        let ox = x0 * s + x;
                        weight[oy * ow + ox] += wgt;
                        for c in 0..3 {
                            acc[c * oh * ow + oy * ow + ox] +=
                                wgt * f64::from(out.data()[c * sth * stw + y * stw + x]);
                        }
                    }
                }
            }
        }
        let data = (0..3 * oh * ow)
            .map(|i| {
                let wgt = weight[i % (oh * ow)];
                debug_assert!(wgt > 0.0, "tiling left an uncovered pixel");
                ((acc[i] / wgt) as f32).clamp(0.0, 1.0)
            })
            .collect();
        Tensor::new(vec![3, oh, ow], data)
    }
}
