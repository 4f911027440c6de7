use crate::error::{Error, Result};
use crate::scalar::{gemm_rowmajor, Scalar};
use crate::tensor::{dims2, dims3, Tensor};

/// Handle to a tensor recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

/// Border handling for spatial padding.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PadMode {
    Zero,
    /// Mirror about the edge sample (the edge itself is not repeated).
    Reflect,
}

/// Test hook: deliberately corrupt one backward rule so gradient checks
/// can prove they detect a broken rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sabotage {
    MatmulLhs,
}

/// Counters filled in by attention layers as they run.
#[derive(Debug, Clone, Copy, Default)]
pub struct AttentionStats {
    /// Number of attention score entries computed (N_q·N_k per head).
    pub entries: u64,
    /// Largest observed |row sum − 1| over all softmaxed score rows.
    pub max_row_sum_dev: f64,
}

#[derive(Debug, Clone)]
pub(crate) enum OpNode {
    Leaf,
    Matmul { a: Var, b: Var },
    /// Input is already padded; `stride` only.
    Conv2d { x: Var, w: Var, b: Var, stride: usize },
    DepthToSpace { x: Var, scale: usize },
    Softmax { x: Var },
    LayerNorm { x: Var, gain: Var, shift: Var, eps: f64 },
    Add { a: Var, b: Var },
    Mul { a: Var, b: Var },
    Relu { x: Var },
    Gelu { x: Var },
    Scale { x: Var, factor: f64 },
    Reshape { x: Var },
    Transpose2d { x: Var },
    RepeatRows { x: Var, n: usize },
    SliceRows { x: Var, start: usize, len: usize },
    SliceCols { x: Var, start: usize, len: usize },
    ConcatCols { parts: Vec<Var> },
    Mean { x: Var },
    Sum { x: Var },
    L1Loss { a: Var, b: Var },
    PatchFlatten { x: Var, patch: usize },
    PatchUnflatten { x: Var, channels: usize, rows: usize, cols: usize, patch: usize },
    Pad2d { x: Var, left: usize, top: usize, mode: PadMode },
    Crop2d { x: Var, height: usize, width: usize },
}

impl OpNode {
    pub(crate) fn inputs(&self) -> Vec<Var> {
        match self {
            OpNode::Leaf => vec![],
            OpNode::Matmul { a, b } | OpNode::Add { a, b } | OpNode::Mul { a, b } | OpNode::L1Loss { a, b } => {
                vec![*a, *b]
            }
            OpNode::Conv2d { x, w, b, .. } => vec![*x, *w, *b],
            OpNode::LayerNorm { x, gain, shift, .. } => vec![*x, *gain, *shift],
            OpNode::ConcatCols { parts } => parts.clone(),
            OpNode::DepthToSpace { x, .. }
            | OpNode::Softmax { x }
            | OpNode::Relu { x }
            | OpNode::Gelu { x }
            | OpNode::Scale { x, .. }
            | OpNode::Reshape { x }
            | OpNode::Transpose2d { x }
            | OpNode::RepeatRows { x, .. }
            | OpNode::SliceRows { x, .. }
            | OpNode::SliceCols { x, .. }
            | OpNode::Mean { x }
            | OpNode::Sum { x }
            | OpNode::PatchFlatten { x, .. }
            | OpNode::PatchUnflatten { x, .. }
            | OpNode::Pad2d { x, .. }
            | OpNode::Crop2d { x, .. } => vec![*x],
        }
    }
}

/// Computation tape: an append-only arena of tensors plus the operation
/// that produced each one. Nodes are in topological order by
/// construction; `backward` walks them once in reverse.
pub struct Tape<E: Scalar> {
    pub(crate) nodes: Vec<Tensor<E>>,
    pub(crate) ops: Vec<OpNode>,
    pub(crate) needs_grad: Vec<bool>,
    attn: AttentionStats,
    pub(crate) sabotage: Option<Sabotage>,
}

impl<E: Scalar> Default for Tape<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Scalar> Tape<E> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            ops: Vec::new(),
            needs_grad: Vec::new(),
            attn: AttentionStats::default(),
            sabotage: None,
        }
    }

    pub fn with_sabotage(sabotage: Option<Sabotage>) -> Self {
        Tape {
            sabotage,
            ..Self::new()
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Record an input tensor. Gradients flow into it iff `requires_grad`.
    pub fn leaf(&mut self, tensor: Tensor<E>) -> Var {
        let needs = tensor.requires_grad;
        self.push(tensor, OpNode::Leaf, needs)
    }

    pub fn value(&self, v: Var) -> &Tensor<E> {
        &self.nodes[v.0]
    }

    pub fn grad(&self, v: Var) -> Option<&[E]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn attention_stats(&self) -> AttentionStats {
        self.attn
    }

    /// Called by attention layers right after softmaxing a score matrix.
    pub fn note_attention(&mut self, probs: Var) {
        let t = &self.nodes[probs.0];
        let (rows, cols) = dims2(t.shape()).expect("attention probs must be 2-d");
        self.attn.entries += (rows * cols) as u64;
        for r in 0..rows {
            let mut sum = 0.0;
            for c in 0..cols {
                sum += t.data()[r * cols + c].to_f64();
            }
            let dev = (sum - 1.0).abs();
            if dev > self.attn.max_row_sum_dev {
                self.attn.max_row_sum_dev = dev;
            }
        }
    }

    fn push(&mut self, tensor: Tensor<E>, op: OpNode, needs_grad: bool) -> Var {
        self.nodes.push(tensor);
        self.ops.push(op);
        self.needs_grad.push(needs_grad);
        Var(self.nodes.len() - 1)
    }

    fn push_op(&mut self, tensor: Tensor<E>, op: OpNode) -> Var {
        let needs = op.inputs().iter().any(|v| self.needs_grad[v.0]);
        self.push(tensor, op, needs)
    }

    // ---- matrix ops ----------------------------------------------------

    /// `a`: m×k, `b`: k×n → m×n.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, ka) = dims2(self.nodes[a.0].shape())
            .ok_or_else(|| Error::Dim(format!("matmul lhs must be 2-d, got {:?}", self.nodes[a.0].shape())))?;
        let (kb, n) = dims2(self.nodes[b.0].shape())
            .ok_or_else(|| Error::Dim(format!("matmul rhs must be 2-d, got {:?}", self.nodes[b.0].shape())))?;
        if ka != kb {
            return Err(Error::Dim(format!(
                "matmul inner extents differ: lhs {:?} vs rhs {:?}",
                self.nodes[a.0].shape(),
                self.nodes[b.0].shape()
            )));
        }
        let mut out = vec![E::zero(); m * n];
        gemm_rowmajor(
            m,
            ka,
            n,
            E::one(),
            self.nodes[a.0].data(),
            false,
            self.nodes[b.0].data(),
            false,
            E::zero(),
            &mut out,
        );
        let t = Tensor::new(vec![m, n], out)?;
        Ok(self.push_op(t, OpNode::Matmul { a, b }))
    }

    pub fn transpose2d(&mut self, x: Var) -> Result<Var> {
        let (r, c) = dims2(self.nodes[x.0].shape())
            .ok_or_else(|| Error::Dim(format!("transpose needs 2-d, got {:?}", self.nodes[x.0].shape())))?;
        let src = self.nodes[x.0].data();
        let mut out = vec![E::zero(); r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = src[i * c + j];
            }
        }
        let t = Tensor::new(vec![c, r], out)?;
        Ok(self.push_op(t, OpNode::Transpose2d { x }))
    }

    // ---- convolution ---------------------------------------------------

    /// Cross-correlation of a pre-padded `x` [C_in,H,W] with `w`
    /// [C_out,C_in,k,k] and bias [C_out], square odd kernel.
    /// Use [`Tape::conv2d`] for the padded variant.
    pub fn conv2d_core(&mut self, x: Var, w: Var, b: Var, stride: usize) -> Result<Var> {
        let (c_in, h, wid) = dims3(self.nodes[x.0].shape())
            .ok_or_else(|| Error::Dim(format!("conv input must be 3-d, got {:?}", self.nodes[x.0].shape())))?;
        let wshape = self.nodes[w.0].shape().to_vec();
        let [c_out, wc_in, kh, kw] = wshape[..] else {
            return Err(Error::Dim(format!("conv weight must be 4-d, got {wshape:?}")));
        };
        if wc_in != c_in {
            return Err(Error::Dim(format!(
                "conv channel mismatch: input {:?} vs weight {:?}",
                self.nodes[x.0].shape(),
                wshape
            )));
        }
        if kh != kw || kh % 2 == 0 {
            return Err(Error::Contract(format!("conv kernel must be square and odd, got {kh}x{kw}")));
        }
        if self.nodes[b.0].shape() != [c_out] {
            return Err(Error::Dim(format!(
                "conv bias shape {:?} does not match {c_out} output channels",
                self.nodes[b.0].shape()
            )));
        }
        if stride == 0 {
            return Err(Error::Contract("conv stride must be >= 1".into()));
        }
        if kh > h || kh > wid {
            return Err(Error::Dim(format!(
                "kernel {kh}x{kh} larger than (padded) input {h}x{wid}"
            )));
        }
        let oh = (h - kh) / stride + 1;
        let ow = (wid - kh) / stride + 1;

        let col = im2col(self.nodes[x.0].data(), c_in, h, wid, kh, stride, oh, ow);
        let l = oh * ow;
        let ck2 = c_in * kh * kh;
        let mut out = vec![E::zero(); c_out * l];
        gemm_rowmajor(
            c_out,
            ck2,
            l,
            E::one(),
            self.nodes[w.0].data(),
            false,
            &col,
            false,
            E::zero(),
            &mut out,
        );
        let bias = self.nodes[b.0].data().to_vec();
        for (co, bval) in bias.iter().enumerate() {
            for v in &mut out[co * l..(co + 1) * l] {
                *v += *bval;
            }
        }
        let t = Tensor::new(vec![c_out, oh, ow], out)?;
        Ok(self.push_op(t, OpNode::Conv2d { x, w, b, stride }))
    }

    /// Convolution with symmetric spatial padding of `pad` on every side.
    pub fn conv2d(&mut self, x: Var, w: Var, b: Var, stride: usize, pad: usize, mode: PadMode) -> Result<Var> {
        let xin = if pad > 0 { self.pad2d(x, pad, pad, pad, pad, mode)? } else { x };
        self.conv2d_core(xin, w, b, stride)
    }

    /// [C·s²,H,W] → [C,H·s,W·s]; out[c, y·s+i, x·s+j] = in[c·s²+i·s+j, y, x].
    pub fn depth_to_space(&mut self, x: Var, scale: usize) -> Result<Var> {
        let (c_in, h, w) = dims3(self.nodes[x.0].shape())
            .ok_or_else(|| Error::Dim(format!("depth_to_space needs 3-d, got {:?}", self.nodes[x.0].shape())))?;
        let s2 = scale * scale;
        if scale == 0 || c_in % s2 != 0 {
            return Err(Error::Dim(format!(
                "depth_to_space: {c_in} channels not divisible by {scale}²"
            )));
        }
        let c_out = c_in / s2;
        let src = self.nodes[x.0].data();
        let (oh, ow) = (h * scale, w * scale);
        let mut out = vec![E::zero(); c_out * oh * ow];
        for c in 0..c_out {
            for i in 0..scale {
                for j in 0..scale {
                    let ci = c * s2 + i * scale + j;
                    for y in 0..h {
                        for x_ in 0..w {
                            out[c * oh * ow + (y * scale + i) * ow + (x_ * scale + j)] =
                                src[ci * h * w + y * w + x_];
                        }
                    }
                }
            }
        }
        let t = Tensor::new(vec![c_out, oh, ow], out)?;
        Ok(self.push_op(t, OpNode::DepthToSpace { x, scale }))
    }

    // ---- normalization and activations ----------------------------------

    /// Max-subtracted softmax along the last axis.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let shape = self.nodes[x.0].shape().to_vec();
        let d = *shape
            .last()
            .ok_or_else(|| Error::Dim("softmax needs rank >= 1".into()))?;
        let src = self.nodes[x.0].data();
        let rows = src.len() / d;
        let mut out = vec![E::zero(); src.len()];
        for r in 0..rows {
            let row = &src[r * d..(r + 1) * d];
            let mut max = row[0];
            for &v in row {
                if v > max {
                    max = v;
                }
            }
            let mut sum = E::zero();
            for (o, &v) in out[r * d..(r + 1) * d].iter_mut().zip(row) {
                let e = (v - max).exp();
                *o = e;
                sum += e;
            }
            for o in &mut out[r * d..(r + 1) * d] {
                *o /= sum;
            }
        }
        let t = Tensor::new(shape, out)?;
        Ok(self.push_op(t, OpNode::Softmax { x }))
    }

    /// Per-token normalization over the last axis, then affine
    /// (gain, shift of extent d).
    pub fn layernorm(&mut self, x: Var, gain: Var, shift: Var, eps: f64) -> Result<Var> {
        let shape = self.nodes[x.0].shape().to_vec();
        let d = *shape
            .last()
            .ok_or_else(|| Error::Dim("layernorm needs rank >= 1".into()))?;
        if self.nodes[gain.0].shape() != [d] || self.nodes[shift.0].shape() != [d] {
            return Err(Error::Dim(format!(
                "layernorm affine shapes {:?}/{:?} do not match token extent {d}",
                self.nodes[gain.0].shape(),
                self.nodes[shift.0].shape()
            )));
        }
        let src = self.nodes[x.0].data();
        let g = self.nodes[gain.0].data();
        let s = self.nodes[shift.0].data();
        let rows = src.len() / d;
        let dn = E::from_f64(d as f64);
        let epse = E::from_f64(eps);
        let mut out = vec![E::zero(); src.len()];
        for r in 0..rows {
            let row = &src[r * d..(r + 1) * d];
            let mut mean = E::zero();
            for &v in row {
                mean += v;
            }
            mean /= dn;
            let mut var = E::zero();
            for &v in row {
                let c = v - mean;
                var += c * c;
            }
            var /= dn;
            let inv = (var + epse).sqrt().recip();
            for i in 0..d {
                out[r * d + i] = (row[i] - mean) * inv * g[i] + s[i];
            }
        }
        let t = Tensor::new(shape, out)?;
        Ok(self.push_op(t, OpNode::LayerNorm { x, gain, shift, eps }))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let t = self.map_unary(x, |v| if v > E::zero() { v } else { E::zero() });
        self.push_op(t, OpNode::Relu { x })
    }

    /// Tanh-form GELU.
    pub fn gelu(&mut self, x: Var) -> Var {
        let t = self.map_unary(x, gelu_value);
        self.push_op(t, OpNode::Gelu { x })
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let f = E::from_f64(factor);
        let t = self.map_unary(x, |v| v * f);
        self.push_op(t, OpNode::Scale { x, factor })
    }

    fn map_unary(&self, x: Var, f: impl Fn(E) -> E) -> Tensor<E> {
        let src = &self.nodes[x.0];
        let data = src.data().iter().map(|&v| f(v)).collect();
        Tensor::new(src.shape().to_vec(), data).expect("unary map preserves shape")
    }

    // ---- elementwise (shapes must match exactly; no broadcasting) -------

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_binary(a, b, "add", |x, y| x + y)?;
        Ok(self.push_op(t, OpNode::Add { a, b }))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_binary(a, b, "mul", |x, y| x * y)?;
        Ok(self.push_op(t, OpNode::Mul { a, b }))
    }

    fn zip_binary(&self, a: Var, b: Var, name: &str, f: impl Fn(E, E) -> E) -> Result<Tensor<E>> {
        let (ta, tb) = (&self.nodes[a.0], &self.nodes[b.0]);
        if ta.shape() != tb.shape() {
            return Err(Error::Dim(format!(
                "{name}: shapes {:?} and {:?} must match exactly",
                ta.shape(),
                tb.shape()
            )));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    // ---- shape ops -------------------------------------------------------

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let src = &self.nodes[x.0];
        let numel: usize = shape.iter().product();
        if numel != src.numel() || shape.contains(&0) {
            return Err(Error::Dim(format!(
                "reshape {:?} -> {shape:?} changes element count",
                src.shape()
            )));
        }
        let t = Tensor::new(shape, src.data().to_vec())?;
        Ok(self.push_op(t, OpNode::Reshape { x }))
    }

    /// Explicit expansion of a vector [d] to [n, d] rows (the crate has no
    /// implicit broadcasting).
    pub fn repeat_rows(&mut self, x: Var, n: usize) -> Result<Var> {
        let src = &self.nodes[x.0];
        let [d] = src.shape() else {
            return Err(Error::Dim(format!("repeat_rows needs 1-d input, got {:?}", src.shape())));
        };
        let d = *d;
        if n == 0 {
            return Err(Error::Dim("repeat_rows: n must be >= 1".into()));
        }
        let mut data = Vec::with_capacity(n * d);
        for _ in 0..n {
            data.extend_from_slice(src.data());
        }
        let t = Tensor::new(vec![n, d], data)?;
        Ok(self.push_op(t, OpNode::RepeatRows { x, n }))
    }

    pub fn slice_rows(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = dims2(self.nodes[x.0].shape())
            .ok_or_else(|| Error::Dim(format!("slice_rows needs 2-d, got {:?}", self.nodes[x.0].shape())))?;
        if start + len > r || len == 0 {
            return Err(Error::Dim(format!(
                "slice_rows [{start}, {}) out of {r} rows",
                start + len
            )));
        }
        let data = self.nodes[x.0].data()[start * c..(start + len) * c].to_vec();
        let t = Tensor::new(vec![len, c], data)?;
        Ok(self.push_op(t, OpNode::SliceRows { x, start, len }))
    }

    pub fn slice_cols(&mut self, x: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = dims2(self.nodes[x.0].shape())
            .ok_or_else(|| Error::Dim(format!("slice_cols needs 2-d, got {:?}", self.nodes[x.0].shape())))?;
        if start + len > c || len == 0 {
            return Err(Error::Dim(format!(
                "slice_cols [{start}, {}) out of {c} columns",
                start + len
            )));
        }
        let src = self.nodes[x.0].data();
        let mut data = Vec::with_capacity(r * len);
        for row in 0..r {
            data.extend_from_slice(&src[row * c + start..row * c + start + len]);
        }
        let t = Tensor::new(vec![r, len], data)?;
        Ok(self.push_op(t, OpNode::SliceCols { x, start, len }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::Dim("concat_cols needs at least one part".into()));
        }
        let r = dims2(self.nodes[parts[0].0].shape())
            .ok_or_else(|| Error::Dim("concat_cols parts must be 2-d".into()))?
            .0;
        let mut widths = Vec::with_capacity(parts.len());
        for p in parts {
            let (pr, pc) = dims2(self.nodes[p.0].shape())
                .ok_or_else(|| Error::Dim("concat_cols parts must be 2-d".into()))?;
            if pr != r {
                return Err(Error::Dim(format!(
                    "concat_cols row mismatch: {:?} vs {:?}",
                    self.nodes[parts[0].0].shape(),
                    self.nodes[p.0].shape()
                )));
            }
            widths.push(pc);
        }
        let total: usize = widths.iter().sum();
        let mut data = Vec::with_capacity(r * total);
        for row in 0..r {
            for (p, &wc) in parts.iter().zip(&widths) {
                let src = self.nodes[p.0].data();
                data.extend_from_slice(&src[row * wc..(row + 1) * wc]);
            }
        }
        let t = Tensor::new(vec![r, total], data)?;
        Ok(self.push_op(t, OpNode::ConcatCols { parts: parts.to_vec() }))
    }

    // ---- reductions and loss --------------------------------------------

    pub fn sum(&mut self, x: Var) -> Var {
        let mut acc = E::zero();
        for &v in self.nodes[x.0].data() {
            acc += v;
        }
        self.push_op(Tensor::scalar(acc), OpNode::Sum { x })
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.nodes[x.0].numel();
        let mut acc = E::zero();
        for &v in self.nodes[x.0].data() {
            acc += v;
        }
        let t = Tensor::scalar(acc / E::from_f64(n as f64));
        self.push_op(t, OpNode::Mean { x })
    }

    /// Mean absolute difference (scalar).
    pub fn l1_loss(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (&self.nodes[a.0], &self.nodes[b.0]);
        if ta.shape() != tb.shape() {
            return Err(Error::Dim(format!(
                "l1_loss: shapes {:?} and {:?} must match exactly",
                ta.shape(),
                tb.shape()
            )));
        }
        let mut acc = E::zero();
        for (&x, &y) in ta.data().iter().zip(tb.data()) {
            acc += (x - y).abs();
        }
        let t = Tensor::scalar(acc / E::from_f64(ta.numel() as f64));
        Ok(self.push_op(t, OpNode::L1Loss { a, b }))
    }

    // ---- patch and spatial layout ops -------------------------------------

    /// [C,H,W] → [N, C·P²] with token n the row-major raster of patch n.
    pub fn patch_flatten(&mut self, x: Var, patch: usize) -> Result<Var> {
        let (c, h, w) = dims3(self.nodes[x.0].shape())
            .ok_or_else(|| Error::Dim(format!("patch_flatten needs 3-d, got {:?}", self.nodes[x.0].shape())))?;
        if patch == 0 || h % patch != 0 || w % patch != 0 {
            return Err(Error::Dim(format!(
                "patch size {patch} does not divide spatial extents {h}x{w}"
            )));
        }
        let (rows, cols) = (h / patch, w / patch);
        let n = rows * cols;
        let e = c * patch * patch;
        let src = self.nodes[x.0].data();
        let mut data = vec![E::zero(); n * e];
        for pr in 0..rows {
            for pc in 0..cols {
                let tok = pr * cols + pc;
                for ch in 0..c {
                    for iy in 0..patch {
                        for ix in 0..patch {
                            data[tok * e + ch * patch * patch + iy * patch + ix] =
                                src[ch * h * w + (pr * patch + iy) * w + (pc * patch + ix)];
                        }
                    }
                }
            }
        }
        let t = Tensor::new(vec![n, e], data)?;
        Ok(self.push_op(t, OpNode::PatchFlatten { x, patch }))
    }

    /// Exact inverse of [`Tape::patch_flatten`].
    pub fn patch_unflatten(&mut self, x: Var, channels: usize, rows: usize, cols: usize, patch: usize) -> Result<Var> {
        let (n, e) = dims2(self.nodes[x.0].shape())
            .ok_or_else(|| Error::Dim(format!("patch_unflatten needs 2-d, got {:?}", self.nodes[x.0].shape())))?;
        if n != rows * cols || e != channels * patch * patch {
            return Err(Error::Dim(format!(
                "token grid {rows}x{cols} (C={channels}, P={patch}) does not match sequence {:?}",
                self.nodes[x.0].shape()
            )));
        }
        let (h, w) = (rows * patch, cols * patch);
        let src = self.nodes[x.0].data();
        let mut data = vec![E::zero(); channels * h * w];
        for pr in 0..rows {
            for pc in 0..cols {
                let tok = pr * cols + pc;
                for ch in 0..channels {
                    for iy in 0..patch {
                        for ix in 0..patch {
                            data[ch * h * w + (pr * patch + iy) * w + (pc * patch + ix)] =
                                src[tok * e + ch * patch * patch + iy * patch + ix];
                        }
                    }
                }
            }
        }
        let t = Tensor::new(vec![channels, h, w], data)?;
        Ok(self.push_op(t, OpNode::PatchUnflatten { x, channels, rows, cols, patch }))
    }

    pub fn pad2d(&mut self, x: Var, left: usize, right: usize, top: usize, bottom: usize, mode: PadMode) -> Result<Var> {
        let (c, h, w) = dims3(self.nodes[x.0].shape())
            .ok_or_else(|| Error::Dim(format!("pad2d needs 3-d, got {:?}", self.nodes[x.0].shape())))?;
        let (oh, ow) = (h + top + bottom, w + left + right);
        let src = self.nodes[x.0].data();
        let mut data = vec![E::zero(); c * oh * ow];
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let sy = oy as isize - top as isize;
                    let sx = ox as isize - left as isize;
                    let v = match mode {
                        PadMode::Zero => {
                            if sy >= 0 && sy < h as isize && sx >= 0 && sx < w as isize {
                                src[ch * h * w + sy as usize * w + sx as usize]
                            } else {
                                E::zero()
                            }
                        }
                        PadMode::Reflect => {
                            let ry = reflect_index(sy, h);
                            let rx = reflect_index(sx, w);
                            src[ch * h * w + ry * w + rx]
                        }
                    };
                    data[ch * oh * ow + oy * ow + ox] = v;
                }
            }
        }
        let t = Tensor::new(vec![c, oh, ow], data)?;
        Ok(self.push_op(t, OpNode::Pad2d { x, left, top, mode }))
    }

    /// Keep the top-left `height`×`width` window of a [C,H,W] tensor.
    pub fn crop2d(&mut self, x: Var, height: usize, width: usize) -> Result<Var> {
        let (c, h, w) = dims3(self.nodes[x.0].shape())
            .ok_or_else(|| Error::Dim(format!("crop2d needs 3-d, got {:?}", self.nodes[x.0].shape())))?;
        if height > h || width > w || height == 0 || width == 0 {
            return Err(Error::Dim(format!("crop {height}x{width} out of {h}x{w}")));
        }
        let src = self.nodes[x.0].data();
        let mut data = vec![E::zero(); c * height * width];
        for ch in 0..c {
            for y in 0..height {
                let s = ch * h * w + y * w;
                data[ch * height * width + y * width..ch * height * width + (y + 1) * width]
                    .copy_from_slice(&src[s..s + width]);
            }
        }
        let t = Tensor::new(vec![c, height, width], data)?;
        Ok(self.push_op(t, OpNode::Crop2d { x, height, width }))
    }
}

/// Mirror `i` into [0, n) about the edge samples (edge not repeated).
/// For n == 1 every index maps to 0.
pub(crate) fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let mut m = i.rem_euclid(period);
    if m >= n as isize {
        m = period - m;
    }
    m as usize
}

pub(crate) fn gelu_value<E: Scalar>(x: E) -> E {
    // sqrt(2/pi)
    let c = E::from_f64(0.797_884_560_802_865_4);
    let a = E::from_f64(0.044_715);
    let u = c * (x + a * x * x * x);
    let half = E::from_f64(0.5);
    half * x * (E::one() + u.tanh())
}

pub(crate) fn gelu_grad<E: Scalar>(x: E) -> E {
    let c = E::from_f64(0.797_884_560_802_865_4);
    let a = E::from_f64(0.044_715);
    let three = E::from_f64(3.0);
    let half = E::from_f64(0.5);
    let u = c * (x + a * x * x * x);
    let t = u.tanh();
    let sech2 = E::one() - t * t;
    half * (E::one() + t) + half * x * sech2 * c * (E::one() + three * a * x * x)
}

/// col[(ci·k²+ky·k+kx), (oy·ow+ox)] = x[ci, oy·s+ky, ox·s+kx]
pub(crate) fn im2col<E: Scalar>(
    x: &[E],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    oh: usize,
    ow: usize,
) -> Vec<E> {
    let l = oh * ow;
    let mut col = vec![E::zero(); c_in * k * k * l];
    for ci in 0..c_in {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut col[row * l..(row + 1) * l];
                for oy in 0..oh {
                    let sy = oy * stride + ky;
                    let src = &x[ci * h * w + sy * w..ci * h * w + (sy + 1) * w];
                    for ox in 0..ow {
                        dst[oy * ow + ox] = src[ox * stride + kx];
                    }
                }
            }
        }
    }
    col
}

/// Scatter-add the columns back into an image; exact adjoint of `im2col`.
pub(crate) fn col2im_accumulate<E: Scalar>(
    col: &[E],
    c_in: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    oh: usize,
    ow: usize,
    out: &mut [E],
) {
    let l = oh * ow;
    for ci in 0..c_in {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &col[row * l..(row + 1) * l];
                for oy in 0..oh {
                    let sy = oy * stride + ky;
                    let dst = &mut out[ci * h * w + sy * w..ci * h * w + (sy + 1) * w];
                    for ox in 0..ow {
                        dst[ox * stride + kx] += src[oy * ow + ox];
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflect_index_mirrors_interior() {
        // n = 5: ..3 2 1 | 0 1 2 3 4 | 3 2 1..
        assert_eq!(reflect_index(-1, 5), 1);
        assert_eq!(reflect_index(-2, 5), 2);
        assert_eq!(reflect_index(5, 5), 3);
        assert_eq!(reflect_index(6, 5), 2);
        assert_eq!(reflect_index(0, 1), 0);
        assert_eq!(reflect_index(-3, 1), 0);
    }
}
